"""Hot loops: per-triple SGD updates and AUC pair counting.

Each kernel has a numba version (explicit loops) and a numpy version
(vectorised per triple / per batch).  ``_accel.backend()`` picks one.
The two agree to rounding; each is deterministic on its own.
"""
from __future__ import annotations

import math

import numpy as np

from . import _accel
from ._accel import njit

# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _sigmoid_neg_nb(x):
    # sigma(-x), written so that neither branch overflows
    if x >= 0.0:
        e = math.exp(-x)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(x))


@njit(cache=True)
def _sgd_sparse_nb(us, pos, neg, beta_item, gamma_user, gamma_item, theta_user, emb, vbias,
                   indptr, indices, values, lr, lam_theta, lam_beta, lam_e, hinge):
    K = gamma_user.shape[1]
    D = theta_user.shape[1]
    F = vbias.shape[0]
    ed = np.empty(D)
    for t in range(us.shape[0]):
        u = us[t]
        i = pos[t]
        j = neg[t]
        x = beta_item[i] - beta_item[j]
        for k in range(K):
            x += gamma_user[u, k] * (gamma_item[i, k] - gamma_item[j, k])
        if D > 0:
            for d in range(D):
                ed[d] = 0.0
            vb = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                c = indices[p]
                v = values[p]
                for d in range(D):
                    ed[d] += emb[d, c] * v
                vb += vbias[c] * v
            for p in range(indptr[j], indptr[j + 1]):
                c = indices[p]
                v = values[p]
                for d in range(D):
                    ed[d] -= emb[d, c] * v
                vb -= vbias[c] * v
            for d in range(D):
                x += theta_user[u, d] * ed[d]
            x += vb
        if not math.isfinite(x):
            return t
        if hinge:
            s = 1.0 if x < 1.0 else 0.0
        else:
            s = _sigmoid_neg_nb(x)

        beta_item[i] += lr * (s - lam_theta * beta_item[i])
        beta_item[j] += lr * (-s - lam_theta * beta_item[j])
        for k in range(K):
            gu = gamma_user[u, k]
            gi = gamma_item[i, k]
            gj = gamma_item[j, k]
            gamma_user[u, k] += lr * (s * (gi - gj) - lam_theta * gu)
            gamma_item[i, k] += lr * (s * gu - lam_theta * gi)
            gamma_item[j, k] += lr * (-s * gu - lam_theta * gj)
        if D > 0:
            # E before theta_u: its update reads the pre-step theta_u
            if lam_e != 0.0:
                decay = 1.0 - lr * lam_e
                for d in range(D):
                    for c in range(F):
                        emb[d, c] *= decay
            if lam_beta != 0.0:
                decay = 1.0 - lr * lam_beta
                for c in range(F):
                    vbias[c] *= decay
            step = lr * s
            for p in range(indptr[i], indptr[i + 1]):
                c = indices[p]
                v = step * values[p]
                for d in range(D):
                    emb[d, c] += theta_user[u, d] * v
                vbias[c] += v
            for p in range(indptr[j], indptr[j + 1]):
                c = indices[p]
                v = step * values[p]
                for d in range(D):
                    emb[d, c] -= theta_user[u, d] * v
                vbias[c] -= v
            for d in range(D):
                theta_user[u, d] += lr * (s * ed[d] - lam_theta * theta_user[u, d])
    return -1


@njit(cache=True)
def _sgd_dense_nb(us, pos, neg, beta_item, gamma_user, gamma_item, theta_user, emb, vbias,
                  feats, lr, lam_theta, lam_beta, lam_e, hinge):
    K = gamma_user.shape[1]
    D = theta_user.shape[1]
    F = vbias.shape[0]
    ed = np.empty(D)
    diff = np.empty(F)
    for t in range(us.shape[0]):
        u = us[t]
        i = pos[t]
        j = neg[t]
        x = beta_item[i] - beta_item[j]
        for k in range(K):
            x += gamma_user[u, k] * (gamma_item[i, k] - gamma_item[j, k])
        if D > 0:
            vb = 0.0
            for c in range(F):
                diff[c] = feats[i, c] - feats[j, c]
                vb += vbias[c] * diff[c]
            for d in range(D):
                acc = 0.0
                for c in range(F):
                    acc += emb[d, c] * diff[c]
                ed[d] = acc
                x += theta_user[u, d] * acc
            x += vb
        if not math.isfinite(x):
            return t
        if hinge:
            s = 1.0 if x < 1.0 else 0.0
        else:
            s = _sigmoid_neg_nb(x)

        beta_item[i] += lr * (s - lam_theta * beta_item[i])
        beta_item[j] += lr * (-s - lam_theta * beta_item[j])
        for k in range(K):
            gu = gamma_user[u, k]
            gi = gamma_item[i, k]
            gj = gamma_item[j, k]
            gamma_user[u, k] += lr * (s * (gi - gj) - lam_theta * gu)
            gamma_item[i, k] += lr * (s * gu - lam_theta * gi)
            gamma_item[j, k] += lr * (-s * gu - lam_theta * gj)
        if D > 0:
            step = lr * s
            e_decay = 1.0 - lr * lam_e
            for d in range(D):
                w = step * theta_user[u, d]
                for c in range(F):
                    emb[d, c] = emb[d, c] * e_decay + w * diff[c]
            b_decay = 1.0 - lr * lam_beta
            for c in range(F):
                vbias[c] = vbias[c] * b_decay + step * diff[c]
            for d in range(D):
                theta_user[u, d] += lr * (s * ed[d] - lam_theta * theta_user[u, d])
    return -1


@njit(cache=True, nogil=True)
def _auc_counts_nb(scores, targets, excl_indptr, excl_indices):
    n_rows, n_items = scores.shape
    wins = np.zeros(n_rows, dtype=np.int64)
    cands = np.zeros(n_rows, dtype=np.int64)
    for r in range(n_rows):
        st = scores[r, targets[r]]
        w = 0
        for c in range(n_items):
            if scores[r, c] < st:
                w += 1
        for p in range(excl_indptr[r], excl_indptr[r + 1]):
            if scores[r, excl_indices[p]] < st:
                w -= 1
        wins[r] = w
        cands[r] = n_items - (excl_indptr[r + 1] - excl_indptr[r])
    return wins, cands


# ---------------------------------------------------------------------------
# numpy fallbacks


def _sigmoid_neg(x: float) -> float:
    if x >= 0.0:
        e = math.exp(-x)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(x))


def _sgd_numpy(us, pos, neg, beta_item, gamma_user, gamma_item, theta_user, emb, vbias,
               feats, lr, lam_theta, lam_beta, lam_e, hinge):
    """Per-triple vectorised updates; ``feats`` is a dense array or CSR triplet."""
    D = theta_user.shape[1]
    sparse = isinstance(feats, tuple)
    if sparse:
        indptr, indices, values = feats
    for t in range(len(us)):
        u, i, j = int(us[t]), int(pos[t]), int(neg[t])
        gu = gamma_user[u].copy()
        gi = gamma_item[i].copy()
        gj = gamma_item[j].copy()
        x = beta_item[i] - beta_item[j] + gu @ (gi - gj)
        if D:
            if sparse:
                ci, vi = indices[indptr[i]:indptr[i + 1]], values[indptr[i]:indptr[i + 1]]
                cj, vj = indices[indptr[j]:indptr[j + 1]], values[indptr[j]:indptr[j + 1]]
                ed = emb[:, ci] @ vi - emb[:, cj] @ vj
                x += theta_user[u] @ ed + (vbias[ci] @ vi - vbias[cj] @ vj)
            else:
                diff = feats[i] - feats[j]
                ed = emb @ diff
                x += theta_user[u] @ ed + vbias @ diff
        x = float(x)
        if not math.isfinite(x):
            return t
        s = (1.0 if x < 1.0 else 0.0) if hinge else _sigmoid_neg(x)

        beta_item[i] += lr * (s - lam_theta * beta_item[i])
        beta_item[j] += lr * (-s - lam_theta * beta_item[j])
        gamma_user[u] += lr * (s * (gi - gj) - lam_theta * gu)
        gamma_item[i] += lr * (s * gu - lam_theta * gi)
        gamma_item[j] += lr * (-s * gu - lam_theta * gj)
        if D:
            tu = theta_user[u].copy()
            if sparse:
                if lam_e != 0.0:
                    emb *= 1.0 - lr * lam_e
                if lam_beta != 0.0:
                    vbias *= 1.0 - lr * lam_beta
                # coordinates are unique within a row, so plain fancy-index adds are safe
                emb[:, ci] += np.outer(tu, lr * s * vi)
                emb[:, cj] -= np.outer(tu, lr * s * vj)
                vbias[ci] += lr * s * vi
                vbias[cj] -= lr * s * vj
            else:
                emb *= 1.0 - lr * lam_e
                emb += np.outer(lr * s * tu, diff)
                vbias *= 1.0 - lr * lam_beta
                vbias += lr * s * diff
            theta_user[u] += lr * (s * ed - lam_theta * tu)
    return -1


def _auc_counts_numpy(scores, targets, excl_indptr, excl_indices):
    rows = np.arange(len(targets))
    st = scores[rows, targets]
    wins = np.count_nonzero(scores < st[:, None], axis=1).astype(np.int64)
    owner = np.repeat(rows, np.diff(excl_indptr))
    wins -= np.bincount(owner, weights=scores[owner, excl_indices] < st[owner], minlength=len(rows)).astype(np.int64)
    cands = scores.shape[1] - np.diff(excl_indptr)
    return wins, cands.astype(np.int64)


# ---------------------------------------------------------------------------
# dispatch


def sgd_run(params, features, us, pos, neg, lr, lam_theta, lam_beta, lam_e, hinge=False) -> int:
    """Apply one SGD update per triple, in order, modifying ``params`` in place.

    ``features`` must have one row per item (or be ``None`` when ``D = 0``).
    Returns the position of the first triple whose score difference was
    non-finite (no update is applied for it), or -1.
    """
    us = np.ascontiguousarray(us, dtype=np.int64)
    pos = np.ascontiguousarray(pos, dtype=np.int64)
    neg = np.ascontiguousarray(neg, dtype=np.int64)
    tensors = (params.beta_item, params.gamma_user, params.gamma_item, params.theta_user,
               params.embedding, params.visual_bias)
    for a in tensors:
        if not (a.flags.c_contiguous and a.dtype == np.float64 and a.flags.writeable):
            raise ValueError("parameter arrays must be writeable C-contiguous float64")
    lr, lam_theta, lam_beta, lam_e = float(lr), float(lam_theta), float(lam_beta), float(lam_e)
    hinge = bool(hinge)

    if params.D == 0 or features is None:
        if params.D:
            raise ValueError("features are required when D > 0")
        sparse, feats = False, np.zeros((params.n_items, 0))
    else:
        sparse = features.is_sparse
        feats = (features.indptr, features.indices, features.values) if sparse else features.dense

    if _accel.backend() == "numba":
        if sparse:
            return int(_sgd_sparse_nb(us, pos, neg, *tensors, *feats, lr, lam_theta, lam_beta, lam_e, hinge))
        return int(_sgd_dense_nb(us, pos, neg, *tensors, feats, lr, lam_theta, lam_beta, lam_e, hinge))
    # divergence is detected explicitly from the returned index
    with np.errstate(over="ignore", invalid="ignore"):
        return int(_sgd_numpy(us, pos, neg, *tensors, feats, lr, lam_theta, lam_beta, lam_e, hinge))


def auc_counts(scores, targets, excl_indptr, excl_indices):
    """Per row: number of non-excluded items scoring strictly below the target, and candidate count.

    Row ``r``'s excluded items are ``excl_indices[excl_indptr[r]:excl_indptr[r+1]]``
    and must contain the target itself.
    """
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    excl_indptr = np.ascontiguousarray(excl_indptr, dtype=np.int64)
    excl_indices = np.ascontiguousarray(excl_indices, dtype=np.int64)
    if _accel.backend() == "numba":
        return _auc_counts_nb(scores, targets, excl_indptr, excl_indices)
    return _auc_counts_numpy(scores, targets, excl_indptr, excl_indices)
