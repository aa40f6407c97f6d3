"""Loaders for expression matrices, regulator lists, GRN edge lists and gene embeddings."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import (
    AllGenesMissing,
    DimensionMismatch,
    EmptyAfterFiltering,
    IoFailure,
    NegativeConfidence,
    NegativeValue,
    NoSnapshots,
    ParseError,
)
from .graph import GeneVocab

log = logging.getLogger(__name__)

EDGELIST_COLUMNS = ("snapshot_index", "source_symbol", "target_symbol", "confidence")


@dataclass(frozen=True, eq=False)
class ExpressionMatrix:
    """Genes x cells non-negative expression, stored as CSR."""

    genes: GeneVocab
    cells: tuple[str, ...]
    values: sp.csr_matrix

    def __post_init__(self):
        v = self.values
        if v.shape != (len(self.genes), len(self.cells)):
            raise DimensionMismatch(
                f"values shape {v.shape} vs {len(self.genes)} genes x {len(self.cells)} cells"
            )
        if len(self.cells) < 1:
            raise DimensionMismatch("expression matrix has no cells")
        if not np.isfinite(v.data).all():
            raise ParseError("expression contains NaN or infinite values")
        if (v.data < 0).any():
            raise NegativeValue("expression values must be non-negative")

    @classmethod
    def from_dense(cls, values, genes, cells) -> "ExpressionMatrix":
        genes = genes if isinstance(genes, GeneVocab) else GeneVocab(genes)
        m = sp.csr_matrix(np.asarray(values, dtype=np.float64))
        m.eliminate_zeros()
        return cls(genes, tuple(str(c) for c in cells), m)

    @property
    def n_genes(self) -> int:
        return len(self.genes)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def dense(self) -> np.ndarray:
        return self.values.toarray()

    def select_cells(self, idx) -> "ExpressionMatrix":
        idx = np.asarray(idx)
        return ExpressionMatrix(self.genes, tuple(self.cells[i] for i in idx), self.values[:, idx].tocsr())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExpressionMatrix):
            return NotImplemented
        return (
            self.genes == other.genes
            and self.cells == other.cells
            and (self.values != other.values).nnz == 0
        )

    __hash__ = None


def _read_lines(path: Path) -> list[str]:
    try:
        with open(path, newline="") as fh:
            return [line.rstrip("\r\n") for line in fh]
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _load_dense_csv(path: Path) -> ExpressionMatrix:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not rows or len(rows[0]) < 2:
        raise ParseError(f"{path}: expected a header row with cell ids")
    cells = rows[0][1:]
    genes, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(cells) + 1:
            raise DimensionMismatch(f"{path}:{lineno}: {len(row) - 1} values for {len(cells)} cells")
        genes.append(row[0])
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    arr = np.array(values, dtype=np.float64).reshape(len(genes), len(cells))
    if np.isnan(arr).any():
        raise ParseError(f"{path}: NaN values")
    if (arr < 0).any():
        raise NegativeValue(f"{path}: negative expression value")
    return ExpressionMatrix.from_dense(arr, GeneVocab(genes), cells)


def _load_matrix_market(path: Path) -> ExpressionMatrix:
    d = path.parent
    genes_p, cells_p = d / "genes.tsv", d / "cells.tsv"
    for p in (genes_p, cells_p):
        if not p.is_file():
            raise IoFailure(f"matrix-market input needs companion file {p}")
    genes = [l.split("\t")[0] for l in _read_lines(genes_p) if l.strip()]
    cells = [l.split("\t")[0] for l in _read_lines(cells_p) if l.strip()]
    try:
        m = scipy.io.mmread(str(path))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    m = sp.csr_matrix(m, dtype=np.float64)
    if m.shape != (len(genes), len(cells)):
        raise DimensionMismatch(f"{path}: matrix {m.shape} vs {len(genes)} genes x {len(cells)} cells")
    if np.isnan(m.data).any():
        raise ParseError(f"{path}: NaN values")
    if (m.data < 0).any():
        raise NegativeValue(f"{path}: negative expression value")
    m.sum_duplicates()
    m.eliminate_zeros()
    return ExpressionMatrix(GeneVocab(genes), tuple(cells), m)


def load_expression(path, format: str = "dense-csv") -> ExpressionMatrix:
    """Read a genes x cells expression matrix.

    ``dense-csv``: first column gene symbol, header row cell ids.
    ``matrix-market``: ``.mtx`` file with ``genes.tsv``/``cells.tsv`` beside it.
    """
    path = Path(path)
    if not path.is_file():
        raise IoFailure(f"{path}: no such file")
    if format == "dense-csv":
        return _load_dense_csv(path)
    if format == "matrix-market":
        return _load_matrix_market(path)
    raise ParseError(f"unknown expression format {format!r}")


def save_matrix_market(expr: ExpressionMatrix, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(d / "matrix.mtx"), expr.values, precision=17)
    (d / "genes.tsv").write_text("".join(f"{g}\n" for g in expr.genes.symbols))
    (d / "cells.tsv").write_text("".join(f"{c}\n" for c in expr.cells))
    return d / "matrix.mtx"


@dataclass(frozen=True)
class RegulatorList:
    ids: tuple[int, ...]
    skipped: int = 0

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


def load_regulators(path, vocab: GeneVocab) -> RegulatorList:
    """One symbol per line; unknown symbols are skipped and counted, duplicates dropped."""
    ids, seen, skipped = [], set(), 0
    for line in _read_lines(Path(path)):
        sym = line.strip()
        if not sym or sym in seen:
            continue
        seen.add(sym)
        if sym in vocab:
            ids.append(vocab[sym])
        else:
            skipped += 1
    if not ids:
        raise EmptyAfterFiltering(f"{path}: no regulator symbol found in vocabulary")
    if skipped:
        log.warning("skipped %d regulator symbols not in vocabulary", skipped)
    return RegulatorList(tuple(ids), skipped)


@dataclass(frozen=True, eq=False)
class EdgeSet:
    """Edges of one snapshot as parallel id arrays, sorted by (src, dst)."""

    t: int
    src: np.ndarray
    dst: np.ndarray
    confidence: np.ndarray

    def __len__(self):
        return len(self.src)

    def as_tuple(self):
        return (self.src, self.dst, self.confidence)


@dataclass(frozen=True)
class EdgeListImport:
    edge_sets: tuple[EdgeSet, ...]
    skipped_unknown: int = 0
    skipped_self_loops: int = 0
    merged_duplicates: int = 0

    def __len__(self):
        return len(self.edge_sets)

    def __getitem__(self, i):
        return self.edge_sets[i]

    def __iter__(self):
        return iter(self.edge_sets)


def _group_edges(t, rows, n) -> tuple[EdgeSet, int]:
    """Sort and dedupe rows of (src, dst, conf); duplicates keep the max confidence."""
    if not rows:
        e = np.empty(0, dtype=np.int64)
        return EdgeSet(t, e, e.copy(), np.empty(0)), 0
    a = np.array(rows, dtype=np.float64)
    src, dst, conf = a[:, 0].astype(np.int64), a[:, 1].astype(np.int64), a[:, 2]
    keys = src * n + dst
    order = np.lexsort((-conf, keys))
    keys, conf = keys[order], conf[order]
    first = np.ones(len(keys), dtype=bool)
    first[1:] = keys[1:] != keys[:-1]
    merged = int((~first).sum())
    keys, conf = keys[first], conf[first]
    return EdgeSet(t, keys // n, keys % n, conf), merged


def import_grn_edgelists(path, vocab: GeneVocab) -> EdgeListImport:
    """Read a precomputed GRN edge list grouped by snapshot index.

    Columns: snapshot_index, source_symbol, target_symbol, confidence
    (tab-separated, one header line). Snapshot indices must cover 1..T.
    """
    lines = _read_lines(Path(path))
    if not lines:
        raise NoSnapshots(f"{path}: empty file")
    header = tuple(h.strip() for h in lines[0].split("\t"))
    if header[:4] != EDGELIST_COLUMNS:
        raise ParseError(f"{path}: header must be {' '.join(EDGELIST_COLUMNS)}, got {header}")
    n = len(vocab)
    groups: dict[int, list] = {}
    unknown = loops = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) < 4:
            raise ParseError(f"{path}:{lineno}: expected 4 columns")
        try:
            t = int(parts[0])
            conf = float(parts[3])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        if not np.isfinite(conf):
            raise ParseError(f"{path}:{lineno}: non-finite confidence")
        if conf < 0:
            raise NegativeConfidence(f"{path}:{lineno}: confidence {conf} < 0")
        if t < 1:
            raise ParseError(f"{path}:{lineno}: snapshot index must be >= 1")
        bucket = groups.setdefault(t, [])
        s, d = parts[1].strip(), parts[2].strip()
        if s not in vocab or d not in vocab:
            unknown += 1
            continue
        if s == d:
            loops += 1
            continue
        bucket.append((vocab[s], vocab[d], conf))
    if not groups:
        raise NoSnapshots(f"{path}: no edge rows")
    T = max(groups)
    missing = sorted(set(range(1, T + 1)) - groups.keys())
    if missing:
        raise ParseError(f"{path}: snapshot indices not consecutive, missing {missing[:5]}")
    sets, merged = [], 0
    for t in range(1, T + 1):
        es, m = _group_edges(t, groups[t], n)
        sets.append(es)
        merged += m
    if unknown:
        log.warning("skipped %d edges with symbols not in vocabulary", unknown)
    if loops:
        log.warning("dropped %d self-loop edges", loops)
    return EdgeListImport(tuple(sets), unknown, loops, merged)


def write_grn_edgelists(path, edge_sets, vocab: GeneVocab) -> Path:
    """Inverse of :func:`import_grn_edgelists`."""
    path = Path(path)
    try:
        with open(path, "w") as fh:
            fh.write("\t".join(EDGELIST_COLUMNS) + "\n")
            for es in edge_sets:
                for a, b, c in zip(es.src.tolist(), es.dst.tolist(), es.confidence.tolist()):
                    fh.write(f"{es.t}\t{vocab.symbols[a]}\t{vocab.symbols[b]}\t{c!r}\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


@dataclass(frozen=True, eq=False)
class ExternalEmbeddings:
    matrix: np.ndarray
    provenance: str = ""
    n_missing: int = 0
    columns: tuple[str, ...] = field(default=())

    @property
    def d_emb(self) -> int:
        return self.matrix.shape[1]


def import_embeddings(path, vocab: GeneVocab, provenance: str | None = None) -> ExternalEmbeddings:
    """Gene-keyed embedding CSV aligned to vocab order; absent genes become zero rows."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not rows or len(rows[0]) < 2:
        raise ParseError(f"{path}: expected header 'gene,<dims...>'")
    cols = tuple(rows[0][1:])
    d = len(cols)
    mat = np.zeros((len(vocab), d))
    found = np.zeros(len(vocab), dtype=bool)
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise ParseError(f"{path}:{lineno}: expected {d} values")
        sym = row[0]
        if sym not in vocab:
            continue
        try:
            vals = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        if not np.isfinite(vals).all():
            raise ParseError(f"{path}:{lineno}: non-finite embedding value")
        mat[vocab[sym]] = vals
        found[vocab[sym]] = True
    if not found.any():
        raise AllGenesMissing(f"{path}: no embedding row matches the vocabulary")
    n_missing = int((~found).sum())
    if n_missing:
        log.warning("%d genes have no embedding; zero-filled", n_missing)
    return ExternalEmbeddings(mat, provenance or os.fspath(path), n_missing, cols)
