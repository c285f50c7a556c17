import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_params
from vbpr import _accel, kernels
from vbpr.dataset import FeatureStore
from vbpr.perf import linear_fit_r2, random_features, time_updates

needs_numba = pytest.mark.skipif(not _accel.HAS_NUMBA, reason="numba not installed")


def run_both(params, feats, triples, hinge=False, lam=(0.1, 0.2, 0.3)):
    out = {}
    for name in ("numba", "numpy"):
        p = params.copy()
        with _accel.use_backend(name):
            bad = kernels.sgd_run(p, feats, *triples, 0.05, *lam, hinge=hinge)
        out[name] = (p, bad)
    return out


def random_triples(rng, U, I, n):
    us = rng.integers(0, U, n)
    i = rng.integers(0, I, n)
    j = (i + rng.integers(1, I, n)) % I
    return us, i, j


@needs_numba
@pytest.mark.parametrize("sparse", [False, True])
@pytest.mark.parametrize("hinge", [False, True])
@pytest.mark.parametrize("lam_e", [0.0, 0.3])
def test_backends_agree_on_sgd(sparse, hinge, lam_e):
    rng = np.random.default_rng(0)
    params = random_params(rng, 8, 12, 3, 2, 10)
    feats = FeatureStore.from_dense(rng.normal(size=(12, 10)) * (rng.random((12, 10)) < 0.3))
    feats = feats.to_sparse() if sparse else feats
    out = run_both(params, feats, random_triples(rng, 8, 12, 300), hinge, (0.1, 0.2, lam_e))
    a, b = out["numba"][0], out["numpy"][0]
    assert out["numba"][1] == out["numpy"][1] == -1
    for name, x in a.tensors().items():
        assert np.allclose(x, b.tensors()[name], rtol=1e-10, atol=1e-12), name


@needs_numba
def test_backends_agree_without_visual_factors():
    rng = np.random.default_rng(1)
    params = random_params(rng, 5, 9, 4, 0, 0)
    out = run_both(params, None, random_triples(rng, 5, 9, 200))
    assert np.allclose(out["numba"][0].gamma_item, out["numpy"][0].gamma_item, rtol=1e-12, atol=1e-14)


@needs_numba
def test_backends_agree_on_auc_counts():
    rng = np.random.default_rng(2)
    scores = rng.integers(0, 5, size=(20, 30)).astype(float)
    targets = rng.integers(0, 30, 20)
    indptr = np.arange(21, dtype=np.int64) * 4
    excl = np.concatenate([rng.choice(30, 4, replace=False) for _ in range(20)]).astype(np.int64)
    with _accel.use_backend("numba"):
        a = kernels.auc_counts(scores, targets, indptr, excl)
    with _accel.use_backend("numpy"):
        b = kernels.auc_counts(scores, targets, indptr, excl)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_nonfinite_score_reported(backend):
    if backend == "numba" and not _accel.HAS_NUMBA:
        pytest.skip("numba not installed")
    rng = np.random.default_rng(3)
    params = random_params(rng, 2, 4, 2, 0, 0)
    params.gamma_item[3] = np.nan
    triples = (np.array([0, 1, 0]), np.array([0, 1, 3]), np.array([1, 2, 0]))
    with _accel.use_backend(backend):
        assert kernels.sgd_run(params, None, *triples, 0.1, 0.1, 0.1, 0.0) == 2


def test_env_flag_selects_numpy():
    code = "from vbpr import _accel; print(_accel.backend())"
    env = {**os.environ, "VBPR_DISABLE_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["VBPR_DISABLE_NUMBA"] = ""
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == ("numba" if _accel.HAS_NUMBA else "numpy")


def test_use_backend_restores():
    before = _accel.backend()
    with _accel.use_backend("numpy"):
        assert _accel.backend() == "numpy"
    assert _accel.backend() == before
    with pytest.raises(ValueError):
        _accel.set_backend("cuda")


def test_rejects_read_only_arrays():
    params = random_params(np.random.default_rng(0), 2, 3, 2, 0, 0)
    params.gamma_user.setflags(write=False)
    with pytest.raises(ValueError):
        kernels.sgd_run(params, None, [0], [0], [1], 0.1, 0.1, 0.1, 0.0)


def test_timing_helpers():
    assert time_updates(4, 2, 16, n_triples=200, repeats=1) > 0
    store = random_features(10, 100, 0.05, np.random.default_rng(0))
    assert store.is_sparse and store.nnz == 50
    a, b, r2 = linear_fit_r2([1, 2, 3, 4], [3, 5, 7, 9])
    assert (a, b) == pytest.approx((1, 2)) and r2 == pytest.approx(1.0)
