"""Implicit-feedback corpora, item feature stores and the leave-one-out split.

Feedback files hold one ``user_id<TAB>item_id`` pair per line.  Feature files
are either sparse TSV (``item_id<TAB>coord:value<TAB>...``) or dense CSV
(``item_id,v0,v1,...``); the format is detected from the first data line.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, DimensionError, ParseError
from .seeding import substream

logger = logging.getLogger(__name__)

PathLike = str | os.PathLike


def _csr_from_sets(sets: Sequence[Iterable[int]]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.fromiter((len(s) for s in sets), dtype=np.int64, count=len(sets))
    indptr = np.zeros(len(sets) + 1, dtype=np.int64)
    np.cumsum(lengths, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    for row, s in enumerate(sets):
        indices[indptr[row]:indptr[row + 1]] = sorted(s)
    return indptr, indices


@dataclass(frozen=True, eq=False)
class InteractionSet:
    """Users, items and the per-user positive item sets, in CSR layout.

    ``indices[indptr[u]:indptr[u + 1]]`` is the sorted positive set of user
    ``u``.  Instances are treated as immutable.
    """

    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    indptr: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "InteractionSet":
        """Build from ``(user_id, item_id)`` pairs; indices follow first appearance."""
        users: dict[str, int] = {}
        items: dict[str, int] = {}
        sets: list[set[int]] = []
        for user, item in pairs:
            u = users.setdefault(user, len(users))
            i = items.setdefault(item, len(items))
            if u == len(sets):
                sets.append(set())
            sets[u].add(i)
        if not users:
            raise DataError("no feedback")
        indptr, indices = _csr_from_sets(sets)
        return cls(tuple(users), tuple(items), indptr, indices)

    @property
    def user_count(self) -> int:
        return len(self.user_ids)

    @property
    def item_count(self) -> int:
        return len(self.item_ids)

    @property
    def feedback_count(self) -> int:
        return int(self.indptr[-1])

    @cached_property
    def user_index_map(self) -> dict[str, int]:
        return {uid: k for k, uid in enumerate(self.user_ids)}

    @cached_property
    def item_index_map(self) -> dict[str, int]:
        return {iid: k for k, iid in enumerate(self.item_ids)}

    @cached_property
    def counts(self) -> np.ndarray:
        """|I_u^+| for every user."""
        return np.diff(self.indptr)

    def positives(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def pairs(self) -> Iterable[tuple[int, int]]:
        for u in range(self.user_count):
            for i in self.positives(u):
                yield u, int(i)


def load_feedback(path: PathLike) -> InteractionSet:
    def parse():
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\r\n")
                if not line.strip():
                    continue
                fields = line.split("\t")
                if len(fields) != 2:
                    raise ParseError(f"expected 2 tab-separated fields, got {len(fields)}", path, lineno)
                user, item = fields
                if not user or not item:
                    raise ParseError("empty user or item id", path, lineno)
                yield user, item

    try:
        return InteractionSet.from_pairs(parse())
    except DataError:
        raise DataError(f"{path}: no feedback") from None


def write_feedback(path: PathLike, data: InteractionSet) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, i in data.pairs():
            fh.write(f"{data.user_ids[u]}\t{data.item_ids[i]}\n")


def filter_min_feedback(data: InteractionSet, min_count: int) -> InteractionSet:
    """Drop users with fewer than ``min_count`` positives; the item universe is kept."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    keep = np.flatnonzero(data.counts >= min_count)
    if keep.size == 0:
        raise DataError(f"all users filtered (min_count={min_count})")
    sets = [data.positives(u) for u in keep]
    indptr = np.zeros(keep.size + 1, dtype=np.int64)
    np.cumsum([len(s) for s in sets], out=indptr[1:])
    indices = np.concatenate(sets).astype(np.int64, copy=False)
    return InteractionSet(tuple(data.user_ids[u] for u in keep), data.item_ids, indptr, indices)


@dataclass(frozen=True, eq=False)
class SplitAssignment:
    """Per-user validation item, test item and remaining training positives.

    ``validation_item``/``test_item`` hold ``-1`` for users without one.
    """

    validation_item: np.ndarray
    test_item: np.ndarray
    train_indptr: np.ndarray
    train_indices: np.ndarray

    def __post_init__(self):
        for a in (self.validation_item, self.test_item, self.train_indptr, self.train_indices):
            a.setflags(write=False)

    @property
    def user_count(self) -> int:
        return len(self.test_item)

    @property
    def train_count(self) -> int:
        return int(self.train_indptr[-1])

    @cached_property
    def train_sizes(self) -> np.ndarray:
        return np.diff(self.train_indptr)

    def train_positives(self, u: int) -> np.ndarray:
        return self.train_indices[self.train_indptr[u]:self.train_indptr[u + 1]]

    def item_train_counts(self, item_count: int) -> np.ndarray:
        return np.bincount(self.train_indices, minlength=item_count).astype(np.int64)

    def same_as(self, other: "SplitAssignment") -> bool:
        return all(
            np.array_equal(a, b)
            for a, b in zip(
                (self.validation_item, self.test_item, self.train_indptr, self.train_indices),
                (other.validation_item, other.test_item, other.train_indptr, other.train_indices),
            )
        )


def split_leave_one_out(data: InteractionSet, seed: int) -> SplitAssignment:
    """Withhold one uniformly drawn validation and one test item per user."""
    counts = data.counts
    short = np.flatnonzero(counts < 3)
    if short.size:
        u = int(short[0])
        raise DataError(
            f"user {data.user_ids[u]!r} (index {u}) has {int(counts[u])} positives; "
            "leave-one-out split needs at least 3"
        )
    rng = substream(seed, "split")
    n = counts.astype(np.float64)
    # two distinct positions per user, uniform without replacement
    a = np.minimum((rng.random(data.user_count) * n).astype(np.int64), counts - 1)
    b = np.minimum((rng.random(data.user_count) * (n - 1)).astype(np.int64), counts - 2)
    b = b + (b >= a)
    validation = data.indices[data.indptr[:-1] + a]
    test = data.indices[data.indptr[:-1] + b]

    keep = np.ones(data.feedback_count, dtype=bool)
    keep[data.indptr[:-1] + a] = False
    keep[data.indptr[:-1] + b] = False
    train_indices = data.indices[keep].copy()
    train_indptr = np.zeros_like(data.indptr)
    np.cumsum(counts - 2, out=train_indptr[1:])
    return SplitAssignment(validation.copy(), test.copy(), train_indptr, train_indices)


# ---------------------------------------------------------------------------
# item features


@dataclass(frozen=True, eq=False)
class FeatureStore:
    """Per-item feature vectors of length ``dimension``.

    Rows are labelled by ``item_ids``.  Storage is either a dense
    ``(rows, dimension)`` array or CSR triplets (``indptr``, ``indices``,
    ``values``) with strictly increasing coordinates per row.
    """

    dimension: int
    item_ids: tuple[str, ...]
    dense: np.ndarray | None = None
    indptr: np.ndarray | None = None
    indices: np.ndarray | None = None
    values: np.ndarray | None = None
    missing: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.dimension < 0:
            raise ValueError("dimension must be >= 0")
        if (self.dense is None) == (self.indptr is None):
            raise ValueError("exactly one of dense / sparse storage is required")
        if self.dense is not None:
            if self.dense.shape != (len(self.item_ids), self.dimension):
                raise DimensionError(
                    f"dense features have shape {self.dense.shape}, "
                    f"expected {(len(self.item_ids), self.dimension)}"
                )
            self.dense.setflags(write=False)
        else:
            if len(self.indptr) != len(self.item_ids) + 1:
                raise DimensionError("indptr length does not match item count")
            if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.dimension):
                raise DimensionError(f"feature coordinate outside [0, {self.dimension})")
            for a in (self.indptr, self.indices, self.values):
                a.setflags(write=False)

    @classmethod
    def from_dense(cls, matrix, item_ids: Sequence[str] | None = None) -> "FeatureStore":
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise DimensionError("dense features must be 2-D")
        ids = tuple(item_ids) if item_ids is not None else tuple(str(k) for k in range(len(matrix)))
        return cls(matrix.shape[1], ids, dense=matrix)

    @classmethod
    def from_rows(cls, dimension: int, rows: Sequence[tuple[Sequence[int], Sequence[float]]],
                  item_ids: Sequence[str] | None = None) -> "FeatureStore":
        """Sparse store from per-row ``(coords, values)`` lists."""
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum([len(c) for c, _ in rows], out=indptr[1:])
        indices = np.zeros(indptr[-1], dtype=np.int64)
        values = np.zeros(indptr[-1], dtype=np.float64)
        for k, (coords, vals) in enumerate(rows):
            indices[indptr[k]:indptr[k + 1]] = coords
            values[indptr[k]:indptr[k + 1]] = vals
            if np.any(np.diff(indices[indptr[k]:indptr[k + 1]]) <= 0):
                raise ValueError(f"row {k}: coordinates must be strictly increasing")
        ids = tuple(item_ids) if item_ids is not None else tuple(str(k) for k in range(len(rows)))
        return cls(dimension, ids, indptr=indptr, indices=indices, values=values)

    @property
    def is_sparse(self) -> bool:
        return self.dense is None

    @property
    def row_count(self) -> int:
        return len(self.item_ids)

    def __len__(self) -> int:
        return self.row_count

    @cached_property
    def row_index_map(self) -> dict[str, int]:
        return {iid: k for k, iid in enumerate(self.item_ids)}

    @property
    def nnz(self) -> int:
        if self.is_sparse:
            return int(self.indptr[-1])
        return int(np.count_nonzero(self.dense))

    def sparse_row(self, row: int) -> tuple[np.ndarray, np.ndarray]:
        if self.is_sparse:
            lo, hi = self.indptr[row], self.indptr[row + 1]
            return self.indices[lo:hi], self.values[lo:hi]
        coords = np.flatnonzero(self.dense[row])
        return coords, self.dense[row, coords]

    def vector(self, row: int) -> np.ndarray:
        """Dense copy of one row."""
        if not self.is_sparse:
            return self.dense[row].copy()
        out = np.zeros(self.dimension)
        coords, vals = self.sparse_row(row)
        out[coords] = vals
        return out

    def dot(self, row: int, w: np.ndarray) -> float:
        if self.is_sparse:
            coords, vals = self.sparse_row(row)
            return float(vals @ w[coords])
        return float(self.dense[row] @ w)

    def matmul(self, w: np.ndarray) -> np.ndarray:
        """All rows times ``w`` (``(dimension, m)``), returning ``(rows, m)``."""
        w = np.asarray(w, dtype=np.float64)
        if w.shape[0] != self.dimension:
            raise DimensionError(f"right operand has {w.shape[0]} rows, features have dimension {self.dimension}")
        if not self.is_sparse:
            return self.dense @ w
        import scipy.sparse as sp

        mat = sp.csr_matrix((self.values, self.indices, self.indptr), shape=(self.row_count, self.dimension))
        return np.asarray(mat @ w)

    def to_dense(self) -> "FeatureStore":
        if not self.is_sparse:
            return self
        dense = np.zeros((self.row_count, self.dimension))
        rows = np.repeat(np.arange(self.row_count), np.diff(self.indptr))
        dense[rows, self.indices] = self.values
        return FeatureStore(self.dimension, self.item_ids, dense=dense, missing=self.missing)

    def to_sparse(self) -> "FeatureStore":
        if self.is_sparse:
            return self
        rows, cols = np.nonzero(self.dense)
        indptr = np.zeros(self.row_count + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=self.row_count), out=indptr[1:])
        return FeatureStore(self.dimension, self.item_ids, indptr=indptr, indices=cols.astype(np.int64),
                            values=self.dense[rows, cols].copy(), missing=self.missing)

    def normalized(self) -> "FeatureStore":
        """Copy with every nonzero row scaled to unit L2 norm."""
        if self.is_sparse:
            rows = np.repeat(np.arange(self.row_count), np.diff(self.indptr))
            norms = np.sqrt(np.bincount(rows, weights=self.values ** 2, minlength=self.row_count))
            scale = np.where(norms > 0, norms, 1.0)
            return FeatureStore(self.dimension, self.item_ids, indptr=self.indptr.copy(),
                                indices=self.indices.copy(), values=self.values / scale[rows],
                                missing=self.missing)
        norms = np.linalg.norm(self.dense, axis=1, keepdims=True)
        return FeatureStore(self.dimension, self.item_ids, dense=self.dense / np.where(norms > 0, norms, 1.0),
                            missing=self.missing)

    def align(self, item_ids: Sequence[str]) -> "FeatureStore":
        """Re-index rows to ``item_ids``; items absent from the store get zero rows.

        The number of such items is recorded in ``missing`` of the result.
        """
        lookup = self.row_index_map
        src = np.array([lookup.get(iid, -1) for iid in item_ids], dtype=np.int64)
        missing = int(np.count_nonzero(src < 0))
        if missing:
            logger.warning("%d of %d items have no feature vector; using zero vectors", missing, len(item_ids))
        if not self.is_sparse:
            dense = np.zeros((len(item_ids), self.dimension))
            have = src >= 0
            dense[have] = self.dense[src[have]]
            return FeatureStore(self.dimension, tuple(item_ids), dense=dense, missing=missing)
        lengths = np.where(src >= 0, np.diff(self.indptr)[np.maximum(src, 0)], 0)
        indptr = np.zeros(len(item_ids) + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        take = np.concatenate(
            [np.arange(self.indptr[s], self.indptr[s + 1]) for s in src if s >= 0] or [np.zeros(0, np.int64)]
        ).astype(np.int64)
        return FeatureStore(self.dimension, tuple(item_ids), indptr=indptr, indices=self.indices[take].copy(),
                            values=self.values[take].copy(), missing=missing)


def _parse_float(text: str, path, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric feature value {text!r}", path, lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite feature value {text!r}", path, lineno)
    return value


def infer_feature_dim(path: PathLike) -> int:
    """Dimension implied by a feature file: CSV column count, or largest TSV coordinate + 1."""
    dim = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) == 1 and "," in line and ":" not in line.split(",")[1]:
                return len(line.split(",")) - 1
            for entry in fields[1:]:
                c, sep, _ = entry.partition(":")
                if sep:
                    try:
                        dim = max(dim, int(c) + 1)
                    except ValueError:
                        raise ParseError(f"non-integer coordinate {c!r}", path, lineno) from None
    if dim == 0:
        raise DataError(f"{path}: cannot infer feature dimension from an all-empty file")
    return dim


def load_features(path: PathLike, dimension: int | None = None, normalize: bool = False) -> FeatureStore:
    """Read a sparse-TSV or dense-CSV feature file.

    Without ``dimension`` it is inferred with :func:`infer_feature_dim`.
    """
    if dimension is None:
        dimension = infer_feature_dim(path)
    if dimension <= 0:
        raise ValueError("feature dimension must be positive")
    ids: list[str] = []
    rows: list[tuple[list[int], list[float]]] = []
    dense_rows: list[list[float]] = []
    fmt = None
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            if fmt is None:
                tab_fields = line.split("\t")
                if len(tab_fields) == 1 and "," in line and ":" not in line.split(",")[1]:
                    fmt = "csv"
                else:
                    fmt = "tsv"
            if fmt == "tsv":
                fields = line.split("\t")
                item = fields[0]
                coords: list[int] = []
                vals: list[float] = []
                for entry in fields[1:]:
                    if not entry:
                        continue
                    c, sep, v = entry.partition(":")
                    if not sep:
                        raise ParseError(f"expected coord:value, got {entry!r}", path, lineno)
                    try:
                        coord = int(c)
                    except ValueError:
                        raise ParseError(f"non-integer coordinate {c!r}", path, lineno) from None
                    if coord < 0 or coord >= dimension:
                        raise ParseError(
                            f"item {item!r}: coordinate {coord} outside [0, {dimension})", path, lineno
                        )
                    if coords and coord <= coords[-1]:
                        raise ParseError(f"item {item!r}: coordinates not strictly increasing", path, lineno)
                    coords.append(coord)
                    vals.append(_parse_float(v, path, lineno))
                rows.append((coords, vals))
            else:
                fields = line.split(",")
                item = fields[0]
                if len(fields) - 1 != dimension:
                    raise ParseError(
                        f"item {item!r}: {len(fields) - 1} values for dimension {dimension}", path, lineno
                    )
                dense_rows.append([_parse_float(v, path, lineno) for v in fields[1:]])
            if not item:
                raise ParseError("empty item id", path, lineno)
            if item in seen:
                raise ParseError(f"duplicate item {item!r}", path, lineno)
            seen.add(item)
            ids.append(item)
    if fmt == "csv":
        store = FeatureStore(dimension, tuple(ids), dense=np.array(dense_rows, dtype=np.float64).reshape(len(ids), dimension))
    else:
        store = FeatureStore.from_rows(dimension, rows, ids)
    return store.normalized() if normalize else store


def write_features(path: PathLike, store: FeatureStore, fmt: str = "tsv") -> None:
    """Write ``store`` as sparse TSV (``fmt="tsv"``) or dense CSV (``fmt="csv"``).

    Values are written with ``repr`` so a read-back is exact.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row, item in enumerate(store.item_ids):
            if fmt == "tsv":
                coords, vals = store.sparse_row(row)
                parts = [f"{int(c)}:{float(v)!r}" for c, v in zip(coords, vals)]
                fh.write("\t".join([item, *parts]) + "\n")
            elif fmt == "csv":
                fh.write(",".join([item, *(repr(float(v)) for v in store.vector(row))]) + "\n")
            else:
                raise ValueError(f"unknown feature format {fmt!r}")
