import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_corpus
from vbpr.dataset import InteractionSet, SplitAssignment, split_leave_one_out
from vbpr.errors import DataError
from vbpr.sampler import TripleSampler, epoch_size, sample_triple


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_triples_respect_positive_sets(seed):
    rng = np.random.default_rng(seed)
    data = random_corpus(rng, 15, 12)
    split = split_leave_one_out(data, seed)
    us, pos, neg = TripleSampler(data, split).sample(rng, 500)
    for u, i, j in zip(us, pos, neg):
        assert i in split.train_positives(u)
        assert j not in data.positives(u)


def test_withheld_items_never_negatives():
    data = InteractionSet.from_pairs([("a", x) for x in "pqrs"] + [("b", x) for x in "pqt"])
    split = split_leave_one_out(data, 0)
    us, _, neg = TripleSampler(data, split).sample(np.random.default_rng(0), 4000)
    assert set(neg[us == 0].tolist()) == {4}
    assert not set(neg[us == 1].tolist()) & set(data.positives(1).tolist())


def test_sampling_is_uniform():
    # user a: 3 training positives and 3 possible negatives
    data = InteractionSet.from_pairs([("a", f"i{k}") for k in range(5)] + [("b", "i9"), ("b", "i8"), ("b", "i7")])
    split = split_leave_one_out(data, 0)
    sampler = TripleSampler(data, split)
    us, pos, neg = sampler.sample(np.random.default_rng(1), 60000)
    mask = us == 0
    assert abs(mask.mean() - 0.5) < 0.01
    _, pc = np.unique(pos[mask], return_counts=True)
    assert len(pc) == 3 and np.all(np.abs(pc / mask.sum() - 1 / 3) < 0.01)
    _, nc = np.unique(neg[mask], return_counts=True)
    assert len(nc) == 3 and np.all(np.abs(nc / mask.sum() - 1 / 3) < 0.01)


def test_sampling_is_reproducible():
    data = random_corpus(np.random.default_rng(0), 10, 10)
    split = split_leave_one_out(data, 0)
    a = TripleSampler(data, split).sample(np.random.default_rng(3), 100)
    b = TripleSampler(data, split).sample(np.random.default_rng(3), 100)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    t = sample_triple(data, split, np.random.default_rng(3))
    assert t == sample_triple(data, split, np.random.default_rng(3))
    assert t.i in split.train_positives(t.u) and t.j not in data.positives(t.u)


def test_user_without_negatives():
    data = InteractionSet.from_pairs([("a", x) for x in "pqr"])
    split = split_leave_one_out(data, 0)
    with pytest.raises(DataError, match="every item"):
        TripleSampler(data, split).sample(np.random.default_rng(0), 1)


def test_epoch_size():
    data = random_corpus(np.random.default_rng(0), 6, 8)
    split = split_leave_one_out(data, 0)
    assert epoch_size(data) == data.feedback_count
    assert epoch_size(split) == data.feedback_count - 2 * data.user_count


def test_forced_triple():
    # items x, v, t, y; a trains on x and withholds v, t, so y is its only negative
    data = InteractionSet.from_pairs([("a", "x"), ("a", "v"), ("a", "t"), ("b", "y"), ("b", "x"), ("b", "v")])
    split = SplitAssignment(np.array([1, 0]), np.array([2, 1]), np.array([0, 1, 2]), np.array([0, 3]))
    us, pos, neg = TripleSampler(data, split).sample(np.random.default_rng(0), 1000)
    a = us == 0
    assert a.any() and set(pos[a].tolist()) == {0} and set(neg[a].tolist()) == {3}


def test_validity_and_frequencies_at_scale():
    rng = np.random.default_rng(6)
    data = random_corpus(rng, 4, 40, min_pos=5, max_pos=10)
    split = split_leave_one_out(data, 6)
    us, pos, neg = TripleSampler(data, split).sample(rng, 1_000_000)
    assert not np.any(pos == neg)
    for u in range(4):
        m = us == u
        assert abs(m.mean() - 0.25) <= 0.01
        allowed = np.setdiff1d(np.arange(data.item_count), data.positives(u))
        counts = np.bincount(neg[m], minlength=data.item_count)[allowed]
        expected = m.sum() / len(allowed)
        sigma = np.sqrt(expected * (1 - 1 / len(allowed)))
        assert np.all(np.abs(counts - expected) <= 4 * sigma)
        assert np.all(np.isin(pos[m], split.train_positives(u)))
        assert not np.any(np.isin(neg[m], data.positives(u)))


def test_epoch_size_examples():
    data = InteractionSet.from_pairs([("a", f"i{k}") for k in range(5)] + [("b", f"i{k}") for k in range(6)]
                                     + [("c", f"i{k}") for k in range(7)])
    assert epoch_size(split_leave_one_out(data, 0)) == 3 + 4 + 5
    assert epoch_size(InteractionSet.from_pairs([("a", "x")])) == 1
