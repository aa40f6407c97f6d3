"""Parameter archives: one ``.npz`` keyed by parameter name plus a JSON header."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import IoFailure, SchemaMismatch

CHECKPOINT_VERSION = 1


def save_checkpoint(path, state: dict, header: dict | None = None) -> Path:
    head = {"format": "tgrn-checkpoint", "version": CHECKPOINT_VERSION}
    head.update(header or {})
    head["shapes"] = {k: list(np.shape(v)) for k, v in state.items()}
    arrays = {f"param/{k}": np.asarray(v, dtype=np.float64) for k, v in state.items()}
    arrays["__header__"] = np.array(json.dumps(head, sort_keys=True))
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path) -> tuple[dict, dict]:
    try:
        with np.load(path, allow_pickle=False) as z:
            if "__header__" not in z.files:
                raise SchemaMismatch(f"{path}: not a checkpoint (no header)")
            head = json.loads(str(z["__header__"]))
            state = {k[len("param/"):]: z[k].copy() for k in z.files if k.startswith("param/")}
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    if head.get("version") != CHECKPOINT_VERSION:
        raise SchemaMismatch(f"{path}: unsupported checkpoint version {head.get('version')}")
    for k, shape in head.get("shapes", {}).items():
        if k not in state or list(state[k].shape) != shape:
            raise SchemaMismatch(f"{path}: parameter {k} missing or wrong shape")
    return state, head
