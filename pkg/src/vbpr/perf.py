"""Per-triple update timing, shared by the benchmark script and the tests."""
from __future__ import annotations

import time

import numpy as np

from . import _accel, kernels
from .dataset import FeatureStore
from .models import init_params


def random_features(n_items: int, F: int, density: float, rng: np.random.Generator) -> FeatureStore:
    """Random non-negative features with the given fraction of nonzeros per row."""
    nnz = max(1, int(round(density * F)))
    rows = []
    for _ in range(n_items):
        coords = np.sort(rng.choice(F, size=nnz, replace=False))
        rows.append((coords, rng.random(nnz)))
    return FeatureStore.from_rows(F, rows)


def time_updates(K: int, D: int, F: int, features: FeatureStore | None = None, n_triples: int = 2000,
                 repeats: int = 3, backend: str | None = None, seed: int = 0,
                 lambda_embed: float = 0.0) -> float:
    """Best-of-``repeats`` wall seconds per SGD update."""
    rng = np.random.default_rng(seed)
    n_users, n_items = 64, 256
    if features is None:
        features = FeatureStore.from_dense(rng.random((n_items, F)))
    params = init_params((n_users, n_items, K, D, F), seed)
    us = rng.integers(0, n_users, n_triples)
    pos = rng.integers(0, n_items // 2, n_triples)
    neg = rng.integers(n_items // 2, n_items, n_triples)
    args = (1e-4, 0.01, 0.01, lambda_embed)
    with _accel.use_backend(backend or _accel.backend()):
        kernels.sgd_run(params, features, us[:4], pos[:4], neg[:4], *args)  # compile / warm up
        best = np.inf
        for _ in range(repeats):
            start = time.perf_counter()
            kernels.sgd_run(params, features, us, pos, neg, *args)
            best = min(best, time.perf_counter() - start)
    return best / n_triples


def linear_fit_r2(x, y) -> tuple[float, float, float]:
    """Least-squares ``y = a + b x``; returns (a, b, R^2)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    r2 = 1.0 - resid @ resid / np.sum((y - y.mean()) ** 2)
    return float(coef[0]), float(coef[1]), float(r2)
