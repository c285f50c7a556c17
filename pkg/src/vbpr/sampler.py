"""Uniform (u, i, j) triple sampling for stochastic gradient ascent."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .dataset import InteractionSet, SplitAssignment
from .errors import DataError


class Triple(NamedTuple):
    u: int
    i: int
    j: int


def epoch_size(data: InteractionSet | SplitAssignment) -> int:
    """Triples per epoch: the number of training positives.

    Given an :class:`InteractionSet` every positive counts; given a
    :class:`SplitAssignment` only the training part does.
    """
    if isinstance(data, SplitAssignment):
        return data.train_count
    return data.feedback_count


class TripleSampler:
    """Draws users uniformly, a positive uniformly from the user's training
    items, and a negative uniformly from items outside the user's *full*
    positive set (so withheld validation/test items are never negatives).
    """

    def __init__(self, data: InteractionSet, split: SplitAssignment):
        if split.user_count != data.user_count:
            raise DataError("split and interaction set disagree on the number of users")
        self.n_items = data.item_count
        self.train_indptr = split.train_indptr
        self.train_indices = split.train_indices
        self.train_sizes = split.train_sizes
        self.users = np.flatnonzero(self.train_sizes > 0)
        if self.users.size == 0:
            raise DataError("no user has training positives")
        self.full_sizes = data.counts
        # sorted keys u * n_items + i of every positive pair, for vectorised membership tests
        owners = np.repeat(np.arange(data.user_count, dtype=np.int64), data.counts)
        self._keys = owners * self.n_items + data.indices

    def _is_positive(self, us: np.ndarray, js: np.ndarray) -> np.ndarray:
        keys = us * self.n_items + js
        at = np.searchsorted(self._keys, keys)
        at = np.minimum(at, len(self._keys) - 1)
        return self._keys[at] == keys

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``n`` triples as three int64 arrays."""
        us = self.users[rng.integers(0, self.users.size, size=n)]
        if np.any(self.full_sizes[us] >= self.n_items):
            bad = int(us[self.full_sizes[us] >= self.n_items][0])
            raise DataError(f"user {bad} has every item as a positive; no negative exists")
        sizes = self.train_sizes[us]
        offs = np.minimum((rng.random(n) * sizes).astype(np.int64), sizes - 1)
        pos = self.train_indices[self.train_indptr[us] + offs]
        neg = rng.integers(0, self.n_items, size=n)
        redo = np.flatnonzero(self._is_positive(us, neg))
        while redo.size:
            neg[redo] = rng.integers(0, self.n_items, size=redo.size)
            redo = redo[self._is_positive(us[redo], neg[redo])]
        return us, pos, neg

    def sample_triple(self, rng: np.random.Generator) -> Triple:
        us, pos, neg = self.sample(rng, 1)
        return Triple(int(us[0]), int(pos[0]), int(neg[0]))


def sample_triple(data: InteractionSet, split: SplitAssignment, rng: np.random.Generator) -> Triple:
    """One triple; build a :class:`TripleSampler` once when drawing many."""
    return TripleSampler(data, split).sample_triple(rng)
