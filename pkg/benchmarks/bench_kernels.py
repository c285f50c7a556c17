"""Numba vs numpy timings for the SGD update and the AUC counting kernel.

    python benchmarks/bench_kernels.py [--quick]
"""
import argparse
import time

import numpy as np

from vbpr import _accel, kernels
from vbpr.perf import random_features, time_updates


def bench_updates(configs, n_triples):
    print(f"{'K':>4} {'D':>4} {'F':>6} {'density':>8} {'numba us':>10} {'numpy us':>10} {'speedup':>8}")
    rng = np.random.default_rng(0)
    for K, D, F, density in configs:
        feats = random_features(256, F, density, rng) if density < 1 else None
        t_nb = time_updates(K, D, F, feats, n_triples=n_triples, backend="numba")
        # the numpy path pays per-triple python overhead; fewer triples keep it bearable
        t_np = time_updates(K, D, F, feats, n_triples=max(200, n_triples // 10), backend="numpy")
        print(f"{K:>4} {D:>4} {F:>6} {density:>8.2f} {t_nb * 1e6:>10.2f} {t_np * 1e6:>10.2f} {t_np / t_nb:>8.1f}")


def bench_auc(n_users, n_items, repeats=3):
    rng = np.random.default_rng(1)
    scores = rng.random((n_users, n_items))
    targets = rng.integers(0, n_items, n_users)
    per_user = 20
    excl_indptr = np.arange(n_users + 1, dtype=np.int64) * per_user
    excl = np.concatenate([rng.choice(n_items, per_user, replace=False) for _ in range(n_users)]).astype(np.int64)
    for name in ("numba", "numpy"):
        with _accel.use_backend(name):
            kernels.auc_counts(scores[:2], targets[:2], excl_indptr[:3], excl[:2 * per_user])
            best = np.inf
            for _ in range(repeats):
                start = time.perf_counter()
                kernels.auc_counts(scores, targets, excl_indptr, excl)
                best = min(best, time.perf_counter() - start)
        print(f"auc_counts {name:>6}: {best * 1e3:8.2f} ms for {n_users} users x {n_items} items")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    if not _accel.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    configs = [(10, 10, 64, 1.0), (10, 10, 1024, 1.0), (10, 10, 1024, 0.01), (32, 32, 256, 1.0)]
    if args.quick:
        configs = configs[:2]
    bench_updates(configs, 500 if args.quick else 5000)
    bench_auc(256 if args.quick else 2048, 2000)


if __name__ == "__main__":
    main()
