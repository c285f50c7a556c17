import numpy as np
import pytest

from vbpr.dataset import FeatureStore, InteractionSet
from vbpr.models import VbprParams


def random_params(rng, U, I, K, D, F, scale=0.5) -> VbprParams:
    return VbprParams(
        alpha=float(rng.normal()),
        beta_user=rng.normal(0, scale, U),
        beta_item=rng.normal(0, scale, I),
        gamma_user=rng.normal(0, scale, (U, K)),
        gamma_item=rng.normal(0, scale, (I, K)),
        theta_user=rng.normal(0, scale, (U, D)),
        embedding=rng.normal(0, scale, (D, F)) if D else np.zeros((0, 0)),
        visual_bias=rng.normal(0, scale, F) if D else np.zeros(0),
        feature_dim=F,
    )


def random_corpus(rng, n_users, n_items, min_pos=3, max_pos=None) -> InteractionSet:
    max_pos = max_pos or max(min_pos, n_items // 2)
    pairs = []
    for u in range(n_users):
        k = int(rng.integers(min_pos, max_pos + 1))
        for i in rng.choice(n_items, size=k, replace=False):
            pairs.append((f"u{u}", f"i{i}"))
    return InteractionSet.from_pairs(pairs)


def random_dense_features(rng, n_items, F) -> FeatureStore:
    return FeatureStore.from_dense(rng.normal(size=(n_items, F)), [f"i{k}" for k in range(n_items)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
