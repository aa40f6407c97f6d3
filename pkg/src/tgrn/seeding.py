"""Deterministic seed derivation: one top-level seed expanded per named purpose."""

from __future__ import annotations

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, (int, np.integer)):
        return int(k) & 0xFFFFFFFF
    return zlib.crc32(str(k).encode())


def derive_seed(base: int, *keys) -> int:
    """Stable 32-bit seed for ``(base, *keys)``; independent of PYTHONHASHSEED."""
    ss = np.random.SeedSequence([int(base) & 0xFFFFFFFF, *(_key(k) for k in keys)])
    return int(ss.generate_state(1)[0])


def rng_for(base: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base, *keys))
