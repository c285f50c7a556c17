"""Parameter stores and preference predictors.

The full predictor scores user ``u`` on item ``i`` as::

    alpha + beta_u + beta_i + gamma_u . gamma_i + theta_u . (E f_i) + beta' . f_i

With ``D = 0`` the visual terms vanish and this is plain biased matrix
factorisation, which is what BPR-MF and MM-MF train.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import FeatureStore, SplitAssignment
from .errors import DimensionError, ParseError
from .seeding import substream

# checkpoint tensor order
TENSORS = ("alpha", "beta_user", "beta_item", "gamma_user", "gamma_item", "theta_user", "embedding", "visual_bias")


@dataclass(eq=False)
class VbprParams:
    alpha: float
    beta_user: np.ndarray
    beta_item: np.ndarray
    gamma_user: np.ndarray
    gamma_item: np.ndarray
    theta_user: np.ndarray
    embedding: np.ndarray
    visual_bias: np.ndarray
    feature_dim: int = 0

    def __post_init__(self):
        self.alpha = float(self.alpha)
        n_users, n_items = len(self.beta_user), len(self.beta_item)
        K, D = self.gamma_user.shape[1], self.theta_user.shape[1]
        if D == 0:
            # no visual path: the store is exactly the plain MF parameter set
            self.feature_dim = 0
            self.embedding = np.zeros((0, 0))
            self.visual_bias = np.zeros(0)
        else:
            self.feature_dim = self.embedding.shape[1]
        expected = {
            "gamma_user": (n_users, K),
            "gamma_item": (n_items, K),
            "theta_user": (n_users, D),
            "embedding": (D, self.feature_dim),
            "visual_bias": (self.feature_dim,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def n_users(self) -> int:
        return len(self.beta_user)

    @property
    def n_items(self) -> int:
        return len(self.beta_item)

    @property
    def K(self) -> int:
        return self.gamma_user.shape[1]

    @property
    def D(self) -> int:
        return self.theta_user.shape[1]

    @property
    def F(self) -> int:
        return self.feature_dim

    @property
    def shape(self) -> tuple[int, int, int, int, int]:
        return (self.n_users, self.n_items, self.K, self.D, self.F)

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64)) for name in TENSORS}

    def copy(self) -> "VbprParams":
        return VbprParams(self.alpha, *(getattr(self, n).copy() for n in TENSORS[1:]), feature_dim=self.feature_dim)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors().values())

    def equals(self, other: "VbprParams") -> bool:
        """Bitwise equality of every tensor."""
        a, b = self.tensors(), other.tensors()
        return self.shape == other.shape and all(
            a[n].shape == b[n].shape and a[n].tobytes() == b[n].tobytes() for n in TENSORS
        )


def split_factors(total: int) -> tuple[int, int]:
    """Fifty-fifty split of ``total`` factors into (latent K, visual D)."""
    if total < 0:
        raise ValueError("factor count must be >= 0")
    return total - total // 2, total // 2


def init_params(shape, seed: int, scale: float = 0.01) -> VbprParams:
    """Gaussian(0, scale^2) factors and embedding; zero offset and biases."""
    n_users, n_items, K, D, F = (int(x) for x in shape)
    if scale <= 0:
        raise ValueError("scale must be positive")
    if min(n_users, n_items, K, D, F) < 0:
        raise ValueError("dimensions must be non-negative")

    def gauss(name, size):
        return substream(seed, "init", name).normal(0.0, scale, size=size)

    return VbprParams(
        alpha=0.0,
        beta_user=np.zeros(n_users),
        beta_item=np.zeros(n_items),
        gamma_user=gauss("gamma_user", (n_users, K)),
        gamma_item=gauss("gamma_item", (n_items, K)),
        theta_user=gauss("theta_user", (n_users, D)),
        embedding=gauss("embedding", (D, F)) if D else np.zeros((0, 0)),
        visual_bias=np.zeros(F if D else 0),
        feature_dim=F,
    )


# ---------------------------------------------------------------------------
# scoring


def _check_index(params: VbprParams, u: int, i: int) -> None:
    if not 0 <= u < params.n_users:
        raise IndexError(f"user index {u} out of range [0, {params.n_users})")
    if not 0 <= i < params.n_items:
        raise IndexError(f"item index {i} out of range [0, {params.n_items})")


def _feature(f, F: int):
    """Normalise a feature argument to ``(coords, values)`` or a dense vector."""
    if isinstance(f, tuple):
        coords, vals = (np.asarray(f[0], dtype=np.int64), np.asarray(f[1], dtype=np.float64))
        if coords.size and (coords.min() < 0 or coords.max() >= F):
            raise DimensionError(f"feature coordinate outside [0, {F})")
        return coords, vals
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (F,):
        raise DimensionError(f"feature vector has shape {f.shape}, expected ({F},)")
    return f


def score_mf(params: VbprParams, u: int, i: int) -> float:
    _check_index(params, u, i)
    return float(params.alpha + params.beta_user[u] + params.beta_item[i] + params.gamma_user[u] @ params.gamma_item[i])


def project_features(params: VbprParams, f) -> np.ndarray:
    """Visual factors ``E f`` of one item; ``f`` is dense or ``(coords, values)``."""
    f = _feature(f, params.F)
    if isinstance(f, tuple):
        coords, vals = f
        return params.embedding[:, coords] @ vals
    return params.embedding @ f


def _visual_terms(params: VbprParams, u: int, f) -> float:
    f = _feature(f, params.F)
    if isinstance(f, tuple):
        coords, vals = f
        return float(params.theta_user[u] @ (params.embedding[:, coords] @ vals) + params.visual_bias[coords] @ vals)
    return float(params.theta_user[u] @ (params.embedding @ f) + params.visual_bias @ f)


def score_vbpr(params: VbprParams, u: int, i: int, f_i) -> float:
    base = score_mf(params, u, i)
    if params.D == 0:
        return base
    return base + _visual_terms(params, u, f_i)


def score_diff(params: VbprParams, u: int, i: int, j: int, features: FeatureStore) -> float:
    """``x_ui - x_uj`` with the offset and user bias cancelled out algebraically."""
    _check_index(params, u, i)
    _check_index(params, u, j)
    x = params.beta_item[i] - params.beta_item[j] + params.gamma_user[u] @ (params.gamma_item[i] - params.gamma_item[j])
    if params.D:
        if features.dimension != params.F:
            raise DimensionError(f"features have dimension {features.dimension}, model expects {params.F}")
        d = features.vector(i) - features.vector(j)
        x += params.theta_user[u] @ (params.embedding @ d) + params.visual_bias @ d
    return float(x)


# ---------------------------------------------------------------------------
# batch scorers used by the evaluator: scorer(users) -> (len(users), n_items)

Scorer = Callable[[np.ndarray], np.ndarray]


class ModelScorer:
    """Full-catalogue scores for a trained parameter store."""

    def __init__(self, params: VbprParams, features: FeatureStore | None = None):
        self.params = params
        item_const = params.beta_item.copy()
        self.item_visual = None
        if params.D:
            if features is None:
                raise DimensionError("a model with visual factors needs item features")
            if features.dimension != params.F:
                raise DimensionError(f"features have dimension {features.dimension}, model expects {params.F}")
            if features.row_count != params.n_items:
                raise DimensionError(f"features have {features.row_count} rows, model has {params.n_items} items")
            proj = features.matmul(np.column_stack([params.embedding.T, params.visual_bias]))
            self.item_visual = np.ascontiguousarray(proj[:, :-1])
            item_const = item_const + proj[:, -1]
        self.item_const = item_const

    def item_factors(self) -> np.ndarray:
        """Per-item visual factors ``E f_i`` (empty columns when D = 0)."""
        if self.item_visual is None:
            return np.zeros((self.params.n_items, 0))
        return self.item_visual

    def __call__(self, users: np.ndarray) -> np.ndarray:
        p = self.params
        users = np.asarray(users, dtype=np.int64)
        scores = p.gamma_user[users] @ p.gamma_item.T
        if self.item_visual is not None:
            scores += p.theta_user[users] @ self.item_visual.T
        scores += self.item_const
        scores += (p.alpha + p.beta_user[users])[:, None]
        return scores


@dataclass(frozen=True, eq=False)
class PopularityTable:
    item_positive_count: np.ndarray

    @property
    def ranking(self) -> np.ndarray:
        """Item indices by descending count; ties keep index order."""
        return np.argsort(-self.item_positive_count, kind="stable")

    def __call__(self, users: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.item_positive_count.astype(np.float64), (len(users), len(self.item_positive_count)))


def popularity_scores(split: SplitAssignment, item_count: int) -> PopularityTable:
    """Training-positive count per item; withheld validation/test items do not count."""
    return PopularityTable(split.item_train_counts(item_count))


@dataclass(frozen=True)
class RandomScorer:
    """Uniform random scores; each user's row depends only on (seed, user)."""

    item_count: int
    seed: int = 0

    def __call__(self, users: np.ndarray) -> np.ndarray:
        out = np.empty((len(users), self.item_count))
        for row, u in enumerate(users):
            out[row] = substream(self.seed, "rand", int(u)).random(self.item_count)
        return out


# ---------------------------------------------------------------------------
# checkpoint io: one JSON line, then little-endian float64 tensors in TENSORS order


def save_checkpoint(path: str | os.PathLike, params: VbprParams, meta: dict | None = None) -> None:
    header = dict(meta or {})
    n_users, n_items, K, D, F = params.shape
    header.update(n_users=n_users, n_items=n_items, K=K, D=D, F=F, tensors=list(TENSORS))
    line = json.dumps(header, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8") + b"\n")
        for t in params.tensors().values():
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_checkpoint(path: str | os.PathLike) -> tuple[VbprParams, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    head, sep, body = raw.partition(b"\n")
    if not sep:
        raise ParseError("checkpoint has no metadata line", path)
    try:
        meta = json.loads(head.decode("utf-8"))
        n_users, n_items, K, D, F = (int(meta[k]) for k in ("n_users", "n_items", "K", "D", "F"))
    except (ValueError, KeyError) as exc:
        raise ParseError(f"bad checkpoint metadata: {exc}", path) from None
    shapes = {
        "alpha": (1,),
        "beta_user": (n_users,),
        "beta_item": (n_items,),
        "gamma_user": (n_users, K),
        "gamma_item": (n_items, K),
        "theta_user": (n_users, D),
        "embedding": (D, F if D else 0),
        "visual_bias": (F if D else 0,),
    }
    total = sum(int(np.prod(s)) for s in shapes.values())
    if len(body) != 8 * total:
        raise ParseError(f"checkpoint payload has {len(body)} bytes, expected {8 * total}", path)
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    arrays, offset = {}, 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        arrays[name] = flat[offset:offset + size].reshape(shape).copy()
        offset += size
    alpha = float(arrays.pop("alpha")[0])
    return VbprParams(alpha=alpha, feature_dim=F, **arrays), meta
