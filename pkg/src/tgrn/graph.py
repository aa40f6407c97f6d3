"""Discrete-time temporal graphs over a persistent gene vocabulary."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ChecksumMismatch,
    DuplicateEdge,
    EmptyInput,
    IdOutOfRange,
    IoFailure,
    ParseError,
    SchemaMismatch,
    SelfLoop,
    TooFewSnapshots,
    VocabTooSmall,
)

BUNDLE_FORMAT_VERSION = 1
BASE_FEATURES = ("mean", "median", "std", "frac_nonzero", "total")


class GeneVocab:
    """Ordered, unique gene symbols mapped to dense ids ``0..n-1``."""

    def __init__(self, symbols: Iterable[str]):
        symbols = tuple(str(s) for s in symbols)
        index = {s: i for i, s in enumerate(symbols)}
        if len(index) != len(symbols):
            seen, dups = set(), []
            for s in symbols:
                if s in seen:
                    dups.append(s)
                seen.add(s)
            raise ParseError(f"duplicate gene symbols: {dups[:5]}")
        if len(symbols) < 2:
            raise VocabTooSmall(f"need at least 2 genes, got {len(symbols)}")
        self.symbols = symbols
        self.index = index

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol) -> bool:
        return symbol in self.index

    def __getitem__(self, symbol: str) -> int:
        return self.index[symbol]

    def __eq__(self, other) -> bool:
        return isinstance(other, GeneVocab) and self.symbols == other.symbols

    def __hash__(self):
        return hash(self.symbols)

    def __repr__(self) -> str:
        return f"GeneVocab(n={len(self)})"


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Snapshot:
    """One GRN snapshot: directed weighted edges plus per-gene features.

    Edges are stored as parallel arrays sorted by ``(src, dst)``. Build
    instances through :func:`make_snapshot`, which validates them.
    """

    t: int
    src: np.ndarray
    dst: np.ndarray
    confidence: np.ndarray
    node_features: np.ndarray
    active_mask: np.ndarray = field(repr=False)

    @property
    def n_genes(self) -> int:
        return self.node_features.shape[0]

    @property
    def n_edges(self) -> int:
        return len(self.src)

    @property
    def d_x(self) -> int:
        return self.node_features.shape[1]

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.src.tolist(), self.dst.tolist(), self.confidence.tolist()))

    def edge_keys(self) -> np.ndarray:
        """Edges encoded as ``src * n_genes + dst`` (sorted, unique)."""
        return self.src.astype(np.int64) * self.n_genes + self.dst

    def __eq__(self, other) -> bool:
        if not isinstance(other, Snapshot):
            return NotImplemented
        return (
            self.t == other.t
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.confidence, other.confidence)
            and np.array_equal(self.node_features, other.node_features)
        )

    __hash__ = None


def active_mask_from_edges(src, dst, n_genes: int) -> np.ndarray:
    mask = np.zeros(n_genes, dtype=bool)
    mask[np.asarray(src, dtype=np.int64)] = True
    mask[np.asarray(dst, dtype=np.int64)] = True
    return mask


def make_snapshot(
    t: int,
    edges,
    node_features,
    n_genes: int | None = None,
) -> Snapshot:
    """Validate and build a :class:`Snapshot`.

    ``edges`` is either a sequence of ``(src, dst, confidence)`` triples or a
    tuple of three parallel arrays.
    """
    x = np.asarray(node_features, dtype=np.float64)
    if x.ndim != 2:
        raise ParseError(f"node_features must be 2-D, got shape {x.shape}")
    n = x.shape[0] if n_genes is None else int(n_genes)
    if x.shape[0] != n:
        raise IdOutOfRange(f"node_features has {x.shape[0]} rows, vocab has {n}")
    if not np.isfinite(x).all():
        raise ParseError(f"snapshot {t}: non-finite node features")

    if isinstance(edges, tuple) and len(edges) == 3 and not np.isscalar(edges[0]):
        src, dst, conf = (np.asarray(a) for a in edges)
    else:
        arr = list(edges)
        if arr:
            src, dst, conf = (np.asarray(c) for c in zip(*arr))
        else:
            src = dst = np.empty(0, dtype=np.int64)
            conf = np.empty(0)
    src = src.astype(np.int64, copy=False).ravel()
    dst = dst.astype(np.int64, copy=False).ravel()
    conf = conf.astype(np.float64, copy=False).ravel()
    if not (len(src) == len(dst) == len(conf)):
        raise ParseError("edge arrays differ in length")
    if len(src):
        bad = (src < 0) | (src >= n) | (dst < 0) | (dst >= n)
        if bad.any():
            i = int(np.argmax(bad))
            raise IdOutOfRange(
                f"snapshot {t}: edge ({src[i]}, {dst[i]}) outside vocab of size {n}"
            )
        loops = src == dst
        if loops.any():
            raise SelfLoop(f"snapshot {t}: self-loop on gene {src[np.argmax(loops)]}")
        if not (np.isfinite(conf).all() and (conf >= 0).all()):
            raise ParseError(f"snapshot {t}: confidences must be finite and >= 0")
        keys = src * n + dst
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        dup = keys[1:] == keys[:-1]
        if dup.any():
            k = keys[1:][dup][0]
            raise DuplicateEdge(f"snapshot {t}: duplicate edge ({k // n}, {k % n})")
        src, dst, conf = src[order], dst[order], conf[order]
    return Snapshot(
        t=int(t),
        src=_freeze(src),
        dst=_freeze(dst),
        confidence=_freeze(conf),
        node_features=_freeze(x.copy()),
        active_mask=_freeze(active_mask_from_edges(src, dst, n)),
    )


@dataclass(frozen=True, eq=False)
class TemporalGraph:
    vocab: GeneVocab
    snapshots: tuple[Snapshot, ...]
    feature_names: tuple[str, ...] = BASE_FEATURES

    @property
    def T(self) -> int:
        return len(self.snapshots)

    @property
    def n_genes(self) -> int:
        return len(self.vocab)

    @property
    def d_x(self) -> int:
        return self.snapshots[0].d_x

    def __getitem__(self, t: int) -> Snapshot:
        """Snapshot by its 1-based index."""
        if not 1 <= t <= self.T:
            raise IndexError(f"snapshot index {t} outside 1..{self.T}")
        return self.snapshots[t - 1]

    def __iter__(self):
        return iter(self.snapshots)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TemporalGraph):
            return NotImplemented
        return (
            self.vocab == other.vocab
            and self.feature_names == other.feature_names
            and self.snapshots == other.snapshots
        )

    __hash__ = None

    def total_edges(self) -> int:
        return sum(s.n_edges for s in self.snapshots)

    def with_snapshots(self, snapshots: Sequence[Snapshot]) -> "TemporalGraph":
        """Copy with replaced snapshots, re-indexed 1..T in the given order."""
        snaps = [
            make_snapshot(i + 1, (s.src, s.dst, s.confidence), s.node_features, self.n_genes)
            for i, s in enumerate(snapshots)
        ]
        return build_temporal_graph(self.vocab, snaps, self.feature_names)


def build_temporal_graph(
    vocab: GeneVocab,
    snapshots: Sequence[Snapshot],
    feature_names: Sequence[str] | None = None,
) -> TemporalGraph:
    """Validate snapshots against ``vocab`` and assemble a temporal graph.

    Snapshot indices must run 1..T in order. Active masks are recomputed
    from edges.
    """
    snapshots = list(snapshots)
    if not snapshots:
        raise EmptyInput("no snapshots given")
    n = len(vocab)
    d_x = None
    checked = []
    for pos, s in enumerate(snapshots, start=1):
        if s.t != pos:
            raise ParseError(f"snapshot indices must be consecutive from 1; got {s.t} at position {pos}")
        if d_x is None:
            d_x = s.d_x
        elif s.d_x != d_x:
            raise ParseError(f"snapshot {s.t} has d_x={s.d_x}, expected {d_x}")
        # revalidates ids/self-loops/duplicates and rebuilds the active mask
        checked.append(make_snapshot(s.t, (s.src, s.dst, s.confidence), s.node_features, n))
    if feature_names is None:
        feature_names = BASE_FEATURES + tuple(f"emb_{i}" for i in range(d_x - len(BASE_FEATURES)))
    feature_names = tuple(feature_names)
    if len(feature_names) != d_x:
        raise ParseError(f"{len(feature_names)} feature names for d_x={d_x}")
    return TemporalGraph(vocab=vocab, snapshots=tuple(checked), feature_names=feature_names)


# ---------------------------------------------------------------- analytics


@dataclass(frozen=True)
class RecurrenceSeries:
    per_snapshot: tuple[tuple[float, float], ...]
    average: float

    def to_rows(self):
        return [
            {"snapshot": t, "recurrent_fraction": r, "new_fraction": nw}
            for t, (r, nw) in enumerate(self.per_snapshot, start=2)
        ]


def recurrence_stats(tg: TemporalGraph) -> RecurrenceSeries:
    """Fraction of each snapshot's edges already present in any earlier one.

    An empty snapshot counts as recurrent fraction 0.
    """
    if tg.T < 2:
        raise TooFewSnapshots(f"recurrence needs T >= 2, got {tg.T}")
    seen = tg.snapshots[0].edge_keys()
    rows = []
    for s in tg.snapshots[1:]:
        keys = s.edge_keys()
        if len(keys):
            rec = float(np.isin(keys, seen, assume_unique=True).sum()) / len(keys)
        else:
            rec = 0.0
        rows.append((rec, 1.0 - rec))
        seen = np.union1d(seen, keys)
    avg = float(np.mean([r for r, _ in rows]))
    return RecurrenceSeries(per_snapshot=tuple(rows), average=avg)


def out_degree_centrality(s: Snapshot, vocab_size: int | None = None) -> np.ndarray:
    """Out-degree of every gene divided by ``|V| - 1``."""
    n = s.n_genes if vocab_size is None else int(vocab_size)
    if n < 2:
        raise VocabTooSmall(f"centrality needs |V| >= 2, got {n}")
    deg = np.bincount(s.src, minlength=n).astype(np.float64)
    return deg / (n - 1)


# ---------------------------------------------------------------- bundle io


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(x: float) -> str:
    return repr(float(x))


def save_bundle(tg: TemporalGraph, directory: str | os.PathLike) -> Path:
    """Write ``tg`` as a bundle directory (manifest, genes, per-snapshot files)."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        files = {}
        p = d / "genes.tsv"
        p.write_text("".join(f"{s}\n" for s in tg.vocab.symbols))
        files[p.name] = _sha256(p)
        header = ",".join(tg.feature_names)
        for s in tg.snapshots:
            p = d / f"snapshot_{s.t}.edges.tsv"
            with open(p, "w") as fh:
                fh.write("src_id\tdst_id\tconfidence\n")
                for a, b, c in zip(s.src.tolist(), s.dst.tolist(), s.confidence.tolist()):
                    fh.write(f"{a}\t{b}\t{_fmt(c)}\n")
            files[p.name] = _sha256(p)
            p = d / f"snapshot_{s.t}.nodes.csv"
            with open(p, "w") as fh:
                fh.write(header + "\n")
                for row in s.node_features.tolist():
                    fh.write(",".join(_fmt(v) for v in row) + "\n")
            files[p.name] = _sha256(p)
        manifest = {
            "format": "tgrn-bundle",
            "format_version": BUNDLE_FORMAT_VERSION,
            "n_genes": tg.n_genes,
            "T": tg.T,
            "d_x": tg.d_x,
            "feature_names": list(tg.feature_names),
            "checksums": files,
        }
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write bundle to {d}: {exc}") from exc
    return d


def _read_edges(path: Path, t: int, n: int):
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if not lines or lines[0].split("\t")[:3] != ["src_id", "dst_id", "confidence"]:
        raise SchemaMismatch(f"{path.name}: bad header")
    src, dst, conf = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"{path.name}:{lineno}: expected 3 columns")
        try:
            src.append(int(parts[0]))
            dst.append(int(parts[1]))
            conf.append(float(parts[2]))
        except ValueError as exc:
            raise ParseError(f"{path.name}:{lineno}: {exc}") from exc
    return (np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(conf))


def _read_nodes(path: Path, names: list[str], n: int) -> np.ndarray:
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if not lines or lines[0].split(",") != names:
        raise SchemaMismatch(f"{path.name}: header does not match manifest feature names")
    try:
        rows = [[float(v) for v in line.split(",")] for line in lines[1:] if line.strip()]
    except ValueError as exc:
        raise ParseError(f"{path.name}: {exc}") from exc
    x = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    if x.shape[0] != n:
        raise SchemaMismatch(f"{path.name}: {x.shape[0]} rows for {n} genes")
    return x


def load_bundle(directory: str | os.PathLike, verify: bool = True) -> TemporalGraph:
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.is_file():
        raise SchemaMismatch(f"{d}: manifest.json missing")
    try:
        manifest = json.loads(mpath.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"{mpath}: unreadable manifest ({exc})") from exc
    required = {"format_version", "n_genes", "T", "d_x", "feature_names", "checksums"}
    if not required <= manifest.keys():
        raise SchemaMismatch(f"manifest missing keys {sorted(required - manifest.keys())}")
    if manifest["format_version"] != BUNDLE_FORMAT_VERSION:
        raise SchemaMismatch(f"unsupported bundle version {manifest['format_version']}")
    if verify:
        for name, digest in manifest["checksums"].items():
            p = d / name
            if not p.is_file():
                raise IoFailure(f"bundle file {name} missing")
            if _sha256(p) != digest:
                raise ChecksumMismatch(f"{name}: checksum mismatch")
    try:
        symbols = [s for s in (d / "genes.tsv").read_text().split("\n") if s != ""]
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    vocab = GeneVocab(symbols)
    n = len(vocab)
    if n != manifest["n_genes"]:
        raise SchemaMismatch(f"genes.tsv has {n} genes, manifest says {manifest['n_genes']}")
    names = list(manifest["feature_names"])
    if len(names) != manifest["d_x"]:
        raise SchemaMismatch("feature_names length disagrees with d_x")
    snaps = []
    for t in range(1, int(manifest["T"]) + 1):
        edges = _read_edges(d / f"snapshot_{t}.edges.tsv", t, n)
        x = _read_nodes(d / f"snapshot_{t}.nodes.csv", names, n)
        snaps.append(make_snapshot(t, edges, x, n))
    return build_temporal_graph(vocab, snaps, names)
