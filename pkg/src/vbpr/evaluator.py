"""Exact AUC over all non-observed items, overall and on cold-start test items.

A scorer is any callable mapping an int array of user indices to a
``(len(users), item_count)`` array of scores.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import InteractionSet, SplitAssignment
from .errors import DataError
from .kernels import auc_counts
from .models import Scorer
from .seeding import substream


@dataclass
class EvalReport:
    auc_all: float
    auc_cold: float | None
    users: np.ndarray
    aucs: np.ndarray
    pairs: np.ndarray
    cold: np.ndarray
    cold_threshold: int

    @property
    def per_user(self) -> list[tuple[int, float, int]]:
        return [(int(u), float(a), int(n)) for u, a, n in zip(self.users, self.aucs, self.pairs)]

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_cold(self) -> int:
        return int(np.count_nonzero(self.cold))

    def to_dict(self) -> dict:
        return {
            "auc_all": self.auc_all,
            "auc_cold": self.auc_cold,
            "cold_threshold": self.cold_threshold,
            "n_users": self.n_users,
            "n_cold_users": self.n_cold,
            "n_pairs": int(self.pairs.sum()),
        }

    def write_json(self, path, extra: dict | None = None) -> None:
        out = self.to_dict()
        if extra:
            out.update(extra)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_per_user_csv(self, path, data: InteractionSet | None = None) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["user", "auc", "pairs", "cold"])
            for u, a, n, c in zip(self.users, self.aucs, self.pairs, self.cold):
                label = data.user_ids[u] if data is not None else int(u)
                w.writerow([label, repr(float(a)), int(n), int(bool(c))])


def _mean(values) -> float:
    return math.fsum(values) / len(values)


def _exclusions(split: SplitAssignment) -> tuple[np.ndarray, np.ndarray]:
    """CSR rows of P_u + V_u + T_u for every user (unsorted within a row)."""
    n = split.user_count
    owners = np.concatenate([
        np.repeat(np.arange(n, dtype=np.int64), split.train_sizes),
        np.flatnonzero(split.validation_item >= 0),
        np.flatnonzero(split.test_item >= 0),
    ])
    items = np.concatenate([
        split.train_indices,
        split.validation_item[split.validation_item >= 0],
        split.test_item[split.test_item >= 0],
    ]).astype(np.int64)
    order = np.argsort(owners, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(owners, minlength=n), out=indptr[1:])
    return indptr, items[order]


def _gather_rows(indptr: np.ndarray, indices: np.ndarray, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    starts = indptr[rows]
    lengths = indptr[rows + 1] - starts
    out_ptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum(lengths, out=out_ptr[1:])
    take = np.repeat(starts - out_ptr[:-1], lengths) + np.arange(out_ptr[-1])
    return out_ptr, indices[take]


def _targets(split: SplitAssignment, target: str) -> np.ndarray:
    if target == "test":
        return split.test_item
    if target == "validation":
        return split.validation_item
    raise ValueError(f"target must be 'test' or 'validation', not {target!r}")


def auc_user(score: Scorer, u: int, data: InteractionSet, split: SplitAssignment,
             target: str = "test") -> tuple[float, int]:
    """AUC of one user's withheld item against every non-observed item, and |E(u)|."""
    item = _targets(split, target)[u]
    if item < 0:
        raise DataError(f"user {u} has no {target} item")
    users = np.array([u], dtype=np.int64)
    scores = np.asarray(score(users), dtype=np.float64).reshape(1, data.item_count)
    indptr, indices = _gather_rows(*_exclusions(split), users)
    wins, cands = auc_counts(scores, np.array([item]), indptr, indices)
    n = int(cands[0])
    return (float(wins[0]) / n if n else float("nan")), n


def _sampled_counts(scores, targets, excl_indptr, excl_indices, users, n, seed):
    wins = np.zeros(len(users), dtype=np.int64)
    for r, u in enumerate(users):
        excluded = excl_indices[excl_indptr[r]:excl_indptr[r + 1]]
        allowed = np.setdiff1d(np.arange(scores.shape[1]), excluded)
        if allowed.size == 0:
            continue
        pick = allowed[substream(seed, "eval-sample", int(u)).integers(0, allowed.size, size=n)]
        wins[r] = np.count_nonzero(scores[r, pick] < scores[r, targets[r]])
    cands = np.where(np.diff(excl_indptr) < scores.shape[1], n, 0).astype(np.int64)
    return wins, cands


def evaluate(score: Scorer, data: InteractionSet, split: SplitAssignment, cold_threshold: int = 5,
             target: str = "test", threads: int = 1, batch_size: int = 512,
             sample_candidates: int | None = None, seed: int = 0) -> EvalReport:
    """Average per-user AUC on the withheld ``target`` items.

    Cold-start users are those whose withheld item has fewer than
    ``cold_threshold`` training positives over all users.  Users with no
    evaluation pairs are left out of both averages.  ``sample_candidates``
    switches to an estimate over that many random candidates per user.
    """
    items = _targets(split, target)
    users = np.flatnonzero(items >= 0)
    batches = [users[k:k + batch_size] for k in range(0, len(users), batch_size)]
    excl = _exclusions(split)

    def run(batch):
        scores = np.asarray(score(batch), dtype=np.float64)
        if scores.shape != (len(batch), data.item_count):
            raise DataError(f"scorer returned shape {scores.shape}, expected {(len(batch), data.item_count)}")
        indptr, indices = _gather_rows(*excl, batch)
        if sample_candidates:
            return _sampled_counts(scores, items[batch], indptr, indices, batch, sample_candidates, seed)
        return auc_counts(scores, items[batch], indptr, indices)

    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, batches))
    else:
        results = [run(b) for b in batches]
    wins = np.concatenate([r[0] for r in results]) if results else np.zeros(0, np.int64)
    cands = np.concatenate([r[1] for r in results]) if results else np.zeros(0, np.int64)

    keep = cands > 0
    users, wins, cands = users[keep], wins[keep], cands[keep]
    aucs = wins / cands
    item_counts = split.item_train_counts(data.item_count)
    cold = item_counts[items[users]] < cold_threshold
    auc_all = _mean(aucs) if len(aucs) else float("nan")
    auc_cold = _mean(aucs[cold]) if cold.any() else None
    return EvalReport(auc_all, auc_cold, users, aucs, cands, cold, cold_threshold)
