"""Stochastic gradient ascent on the pairwise ranking objective.

Per sampled triple ``(u, i, j)`` with ``x = x_ui - x_uj`` the log-sigmoid
loss steps every touched parameter by ``lr * (s * dx/dparam - lam * param)``
with ``s = sigmoid(-x)``; the hinge variant (MM-MF) uses ``s = 1`` while
``x < 1`` and ``s = 0`` otherwise.  Regularisation groups: ``lambda_theta``
for item biases and all user/item factors, ``lambda_beta`` for the visual
bias vector, ``lambda_embed`` for the embedding matrix.  The offset and the
user biases cancel in ``x`` and are never updated.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .dataset import FeatureStore, InteractionSet, SplitAssignment
from .errors import DimensionError, DivergenceError
from .evaluator import evaluate
from .models import ModelScorer, VbprParams, init_params
from .sampler import Triple, TripleSampler, epoch_size
from .seeding import substream

logger = logging.getLogger(__name__)

LOSSES = ("bpr-sigmoid", "hinge")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.005
    lambda_theta: float = 1.0
    lambda_beta: float | None = None  # None: same as lambda_theta
    lambda_embed: float = 0.0
    epochs: int = 100
    loss: str = "bpr-sigmoid"
    seed: int = 0
    eval_every: int = 1
    latent_dim: int = 10
    visual_dim: int = 10
    init_scale: float = 0.01
    objective_sample: int = 2000

    def __post_init__(self):
        if not self.learning_rate >= 0 or not math.isfinite(self.learning_rate):
            raise ValueError("learning_rate must be a finite non-negative number")
        for name in ("lambda_theta", "lambda_beta", "lambda_embed"):
            value = getattr(self, name)
            if value is not None and not value >= 0:
                raise ValueError(f"{name} must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.latent_dim < 0 or self.visual_dim < 0:
            raise ValueError("factor dimensions must be >= 0")

    @property
    def lam_beta(self) -> float:
        return self.lambda_theta if self.lambda_beta is None else self.lambda_beta

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# single steps


def _touched(params: VbprParams, t: Triple) -> dict[str, np.ndarray]:
    u, i, j = t
    out = {
        "beta_item": params.beta_item[[i, j]],
        "gamma_user": params.gamma_user[u],
        "gamma_item": params.gamma_item[[i, j]],
    }
    if params.D:
        out.update(theta_user=params.theta_user[u], embedding=params.embedding, visual_bias=params.visual_bias)
    return out


def _diagnose(params: VbprParams, t: Triple) -> str:
    for name, values in _touched(params, t).items():
        if not np.all(np.isfinite(values)):
            return name
    return "score"


def _step(params: VbprParams, t: Triple, features: FeatureStore | None, cfg: TrainConfig, hinge: bool) -> VbprParams:
    u, i, j = (int(x) for x in t)
    if i == j:
        raise ValueError("positive and negative item must differ")
    bad = kernels.sgd_run(params, features, [u], [i], [j], cfg.learning_rate, cfg.lambda_theta,
                          cfg.lam_beta, cfg.lambda_embed, hinge=hinge)
    if bad >= 0:
        raise DivergenceError(f"non-finite score difference for triple {tuple(t)}; "
                              f"first non-finite parameter: {_diagnose(params, t)}",
                              triple=Triple(u, i, j), parameter=_diagnose(params, t))
    name = _diagnose(params, Triple(u, i, j))
    if name != "score":
        raise DivergenceError(f"update for triple {(u, i, j)} made {name} non-finite",
                              triple=Triple(u, i, j), parameter=name)
    return params


def sgd_step_bpr(params: VbprParams, t: Triple, features: FeatureStore | None, cfg: TrainConfig) -> VbprParams:
    """One log-sigmoid ascent step, in place; returns ``params``."""
    return _step(params, t, features, cfg, hinge=False)


def sgd_step_hinge(params: VbprParams, t: Triple, features: FeatureStore | None, cfg: TrainConfig) -> VbprParams:
    """One hinge-loss (sub)gradient step, in place; returns ``params``."""
    return _step(params, t, features, cfg, hinge=True)


# ---------------------------------------------------------------------------
# objective


def log_sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))


def score_differences(params: VbprParams, triples, features: FeatureStore | None) -> np.ndarray:
    us, pos, neg = (np.asarray(a, dtype=np.int64) for a in triples)
    x = params.beta_item[pos] - params.beta_item[neg]
    x = x + np.einsum("nk,nk->n", params.gamma_user[us], params.gamma_item[pos] - params.gamma_item[neg])
    if params.D:
        items = np.unique(np.concatenate([pos, neg]))
        rows = np.searchsorted(items, pos), np.searchsorted(items, neg)
        sub = _feature_rows(features, items)
        proj = sub @ np.column_stack([params.embedding.T, params.visual_bias])
        diff = proj[rows[0]] - proj[rows[1]]
        x = x + np.einsum("nd,nd->n", params.theta_user[us], diff[:, :-1]) + diff[:, -1]
    return x


def _feature_rows(features: FeatureStore, items: np.ndarray) -> np.ndarray:
    if features.is_sparse:
        out = np.zeros((len(items), features.dimension))
        for r, i in enumerate(items):
            coords, vals = features.sparse_row(int(i))
            out[r, coords] = vals
        return out
    return features.dense[items]


def regularizer(params: VbprParams, triples, cfg: TrainConfig) -> np.ndarray:
    """Per-triple penalty ``lam/2 * ||touched params||^2`` matching the update rules."""
    us, pos, neg = (np.asarray(a, dtype=np.int64) for a in triples)
    sq = (params.beta_item[pos] ** 2 + params.beta_item[neg] ** 2
          + np.sum(params.gamma_user[us] ** 2, axis=1)
          + np.sum(params.gamma_item[pos] ** 2, axis=1)
          + np.sum(params.gamma_item[neg] ** 2, axis=1))
    if params.D:
        sq = sq + np.sum(params.theta_user[us] ** 2, axis=1)
    reg = 0.5 * cfg.lambda_theta * sq
    if params.D:
        reg = reg + 0.5 * (cfg.lam_beta * np.sum(params.visual_bias ** 2)
                           + cfg.lambda_embed * np.sum(params.embedding ** 2))
    return reg


def estimate_objective(params: VbprParams, triples, cfg: TrainConfig, features: FeatureStore | None = None) -> float:
    """Mean per-triple objective (loss chosen by ``cfg.loss``) over a triple sample."""
    if len(triples[0]) == 0:
        raise ValueError("empty triple sample")
    x = score_differences(params, triples, features)
    fit = log_sigmoid(x) if cfg.loss == "bpr-sigmoid" else -np.maximum(0.0, 1.0 - x)
    return float(np.mean(fit - regularizer(params, triples, cfg)))


def estimate_bpr_objective(params: VbprParams, triples, cfg: TrainConfig, features: FeatureStore | None = None) -> float:
    """Mean of ``ln sigmoid(x_uij)`` minus the per-triple regulariser."""
    x = score_differences(params, triples, features)
    if x.size == 0:
        raise ValueError("empty triple sample")
    return float(np.mean(log_sigmoid(x) - regularizer(params, triples, cfg)))


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainingLog:
    rows: list[tuple[int, float, float, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_val_auc: float = float("-inf")

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "objective_estimate", "val_auc", "wall_seconds"])
            for epoch, obj, auc, secs in self.rows:
                w.writerow([epoch, repr(obj), repr(auc), f"{secs:.3f}"])


def _check_inputs(data: InteractionSet, split: SplitAssignment, features: FeatureStore | None, cfg: TrainConfig):
    if split.user_count != data.user_count:
        raise DimensionError("split and interaction set disagree on the number of users")
    if cfg.visual_dim:
        if features is None:
            raise DimensionError("visual factors requested but no features given")
        if features.row_count != data.item_count:
            raise DimensionError(
                f"features have {features.row_count} rows but the corpus has {data.item_count} items; "
                "align them with FeatureStore.align(data.item_ids)"
            )


def train(data: InteractionSet, split: SplitAssignment, features: FeatureStore | None,
          cfg: TrainConfig) -> tuple[VbprParams, TrainingLog]:
    """Run ``cfg.epochs`` epochs of SGD and keep the parameters with the best validation AUC."""
    _check_inputs(data, split, features, cfg)
    F = features.dimension if (features is not None and cfg.visual_dim) else 0
    params = init_params((data.user_count, data.item_count, cfg.latent_dim, cfg.visual_dim, F),
                         cfg.seed, cfg.init_scale)
    feats = features if cfg.visual_dim else None
    sampler = TripleSampler(data, split)
    rng = substream(cfg.seed, "sampler")
    n = epoch_size(split)
    probe = sampler.sample(substream(cfg.seed, "objective"), min(cfg.objective_sample, n))
    hinge = cfg.loss == "hinge"

    log = TrainingLog()
    best = params.copy()
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        us, pos, neg = sampler.sample(rng, n)
        bad = kernels.sgd_run(params, feats, us, pos, neg, cfg.learning_rate, cfg.lambda_theta,
                              cfg.lam_beta, cfg.lambda_embed, hinge=hinge)
        if bad >= 0:
            t = Triple(int(us[bad]), int(pos[bad]), int(neg[bad]))
            name = _diagnose(params, t)
            raise DivergenceError(f"epoch {epoch}: non-finite value in {name} at triple {tuple(t)}",
                                  epoch=epoch, triple=t, parameter=name)
        if epoch % cfg.eval_every and epoch != cfg.epochs:
            continue
        obj = estimate_objective(params, probe, cfg, feats)
        if not math.isfinite(obj) or not params.is_finite():
            raise DivergenceError(f"epoch {epoch}: objective diverged ({obj})", epoch=epoch)
        val = evaluate(ModelScorer(params, feats), data, split, target="validation").auc_all
        log.rows.append((epoch, obj, val, time.perf_counter() - start))
        logger.info("epoch %d objective %.5f val_auc %.4f", epoch, obj, val)
        # without validation items there is nothing to select on; keep the latest parameters
        if val > log.best_val_auc or math.isnan(val):
            log.best_val_auc, log.best_epoch = val, epoch
            best = params.copy()
    return best, log


def model_config(model: str, factors: int = 20, latent_dim: int | None = None,
                 visual_dim: int | None = None, **overrides) -> TrainConfig:
    """Configuration for a named model: ``vbpr``, ``bpr-mf`` or ``mm-mf``.

    ``factors`` is the total dimension; VBPR splits it fifty-fifty unless
    ``latent_dim``/``visual_dim`` are given explicitly.
    """
    from .models import split_factors

    if model == "vbpr":
        K, D = split_factors(factors)
        K = K if latent_dim is None else latent_dim
        D = D if visual_dim is None else visual_dim
        loss = "bpr-sigmoid"
    elif model in ("bpr-mf", "mm-mf"):
        K, D = (factors if latent_dim is None else latent_dim), 0
        loss = "bpr-sigmoid" if model == "bpr-mf" else "hinge"
    else:
        raise ValueError(f"unknown model {model!r}")
    return TrainConfig(latent_dim=K, visual_dim=D, loss=loss, **overrides)


def model_name(params: VbprParams, loss: str) -> str:
    """Canonical name of what was trained: a VBPR store with D = 0 *is* BPR-MF."""
    if loss == "hinge":
        return "mm-mf" if params.D == 0 else "vbpr-hinge"
    return "bpr-mf" if params.D == 0 else "vbpr"


DEFAULT_LAMBDA_GRID = (0.1, 1.0, 10.0)


@dataclass
class GridResult:
    config: TrainConfig
    val_auc: float
    best_epoch: int


def grid_search(data: InteractionSet, split: SplitAssignment, features: FeatureStore | None,
                base: TrainConfig, lambda_thetas=DEFAULT_LAMBDA_GRID, lambda_embeds=None,
                learning_rates=None) -> tuple[VbprParams, TrainConfig, TrainingLog, list[GridResult]]:
    """Train every grid point and keep the one with the highest validation AUC.

    ``lambda_embeds`` is only swept for models with visual factors; ``None``
    keeps the base value.  Ties go to the earlier grid point.
    """
    results: list[GridResult] = []
    best = None
    embeds = lambda_embeds if (lambda_embeds is not None and base.visual_dim) else [base.lambda_embed]
    rates = learning_rates if learning_rates is not None else [base.learning_rate]
    for lr in rates:
        for lam in lambda_thetas:
            for lam_e in embeds:
                cfg = replace(base, learning_rate=float(lr), lambda_theta=float(lam), lambda_embed=float(lam_e))
                params, log = train(data, split, features, cfg)
                results.append(GridResult(cfg, log.best_val_auc, log.best_epoch))
                if best is None or log.best_val_auc > best[2].best_val_auc:
                    best = (params, cfg, log)
    return best[0], best[1], best[2], results
