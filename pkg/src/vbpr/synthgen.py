"""Synthetic corpora with a planted, linearly recoverable visual preference.

Every user and item gets a visual factor (``true_visual_dim``) and a latent
factor (``true_latent_dim``), all standard normal.  Affinity is::

    A[u, i] = w * <p_u, v_i> + (1 - w) * <q_u, l_i>,   w = visual_weight

Item features are ``f_i = M v_i + noise`` for a fixed random ``M`` of shape
``(F, true_visual_dim)``, optionally thinned to ``feature_density``.  Each
user draws ``feedback_per_user`` distinct items from
``softmax(A[u] / temperature + log exposure)`` (Gumbel top-k); cold items
have their exposure scaled by ``cold_exposure`` but keep their affinities.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import FeatureStore, InteractionSet
from .seeding import substream


@dataclass(frozen=True)
class SynthConfig:
    users: int = 1000
    items: int = 500
    F: int = 64
    true_visual_dim: int = 4
    true_latent_dim: int = 4
    visual_weight: float = 0.7
    feedback_per_user: int = 5
    cold_fraction: float = 0.5
    seed: int = 0
    feature_density: float = 1.0
    feature_noise: float = 0.1
    temperature: float = 1.0
    cold_exposure: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.visual_weight <= 1.0:
            raise ValueError("visual_weight must lie in [0, 1]")
        if not 0.0 < self.feature_density <= 1.0:
            raise ValueError("feature_density must lie in (0, 1]")
        if not 0.0 <= self.cold_fraction <= 1.0:
            raise ValueError("cold_fraction must lie in [0, 1]")
        for name in ("users", "items", "F", "true_visual_dim", "true_latent_dim", "feedback_per_user"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.feedback_per_user >= self.items:
            raise ValueError("infeasible config: feedback_per_user must be smaller than items")
        if self.temperature < 0 or self.feature_noise < 0 or not 0 < self.cold_exposure <= 1:
            raise ValueError("temperature and feature_noise must be >= 0, cold_exposure in (0, 1]")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    user_visual: np.ndarray
    item_visual: np.ndarray
    user_latent: np.ndarray
    item_latent: np.ndarray
    projection: np.ndarray
    cold: np.ndarray
    visual_weight: float

    def affinity(self, users: np.ndarray) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        w = self.visual_weight
        return (w * (self.user_visual[users] @ self.item_visual.T)
                + (1.0 - w) * (self.user_latent[users] @ self.item_latent.T))

    def __call__(self, users: np.ndarray) -> np.ndarray:
        """Oracle scorer: the true affinities."""
        return self.affinity(users)

    def to_json(self) -> dict:
        return {
            "visual_weight": self.visual_weight,
            "cold_items": np.flatnonzero(self.cold).tolist(),
            **{k: getattr(self, k).tolist() for k in
               ("user_visual", "item_visual", "user_latent", "item_latent", "projection")},
        }

    def save(self, path, config: SynthConfig | None = None) -> None:
        out = self.to_json()
        if config is not None:
            out["config"] = asdict(config)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(out, fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "GroundTruth":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        arrays = {k: np.asarray(raw[k], dtype=np.float64) for k in
                  ("user_visual", "item_visual", "user_latent", "item_latent", "projection")}
        cold = np.zeros(len(arrays["item_visual"]), dtype=bool)
        cold[raw["cold_items"]] = True
        return cls(cold=cold, visual_weight=raw["visual_weight"], **arrays)


def generate(cfg: SynthConfig) -> tuple[InteractionSet, FeatureStore, GroundTruth]:
    def stream(name):
        return substream(cfg.seed, "synth", name)

    U, I, Dv, Kl = cfg.users, cfg.items, cfg.true_visual_dim, cfg.true_latent_dim
    user_visual = stream("user_visual").standard_normal((U, Dv))
    item_visual = stream("item_visual").standard_normal((I, Dv))
    user_latent = stream("user_latent").standard_normal((U, Kl))
    item_latent = stream("item_latent").standard_normal((I, Kl))
    projection = stream("projection").standard_normal((cfg.F, Dv)) / np.sqrt(Dv)

    feats = item_visual @ projection.T
    if cfg.feature_noise:
        feats += cfg.feature_noise * stream("feature_noise").standard_normal(feats.shape)
    if cfg.feature_density < 1.0:
        feats *= stream("feature_mask").random(feats.shape) < cfg.feature_density

    n_cold = int(round(cfg.cold_fraction * I))
    cold = np.zeros(I, dtype=bool)
    cold[stream("cold").permutation(I)[:n_cold]] = True
    log_exposure = np.where(cold, np.log(cfg.cold_exposure), 0.0)

    truth = GroundTruth(user_visual, item_visual, user_latent, item_latent, projection, cold, cfg.visual_weight)
    gumbel = stream("choice")
    chosen = np.empty((U, cfg.feedback_per_user), dtype=np.int64)
    for lo in range(0, U, 256):
        users = np.arange(lo, min(lo + 256, U))
        aff = truth.affinity(users)
        if cfg.temperature > 0:
            keys = aff / cfg.temperature + log_exposure + gumbel.gumbel(size=aff.shape)
        else:
            keys = aff + log_exposure
        chosen[users] = np.argsort(-keys, axis=1, kind="stable")[:, :cfg.feedback_per_user]

    # corpus indices coincide with generation order, so truth rows and feature rows line up
    item_ids = tuple(f"i{i}" for i in range(I))
    indptr = np.arange(U + 1, dtype=np.int64) * cfg.feedback_per_user
    data = InteractionSet(tuple(f"u{u}" for u in range(U)), item_ids, indptr, np.sort(chosen, axis=1).ravel())
    return data, FeatureStore.from_dense(feats, item_ids), truth
