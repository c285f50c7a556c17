"""Visually-aware Bayesian personalized ranking for implicit feedback."""
from .dataset import (FeatureStore, InteractionSet, SplitAssignment, filter_min_feedback, load_features,
                      load_feedback, split_leave_one_out)
from .errors import DataError, DimensionError, DivergenceError, ParseError, VbprError
from .evaluator import EvalReport, evaluate
from .models import (ModelScorer, RandomScorer, VbprParams, init_params, load_checkpoint, popularity_scores,
                     project_features, save_checkpoint, score_diff, score_mf, score_vbpr)
from .sampler import Triple, TripleSampler, sample_triple
from .synthgen import SynthConfig, generate
from .trainer import TrainConfig, grid_search, model_config, sgd_step_bpr, sgd_step_hinge, train

__version__ = "0.1.0"

__all__ = [
    "DataError", "DimensionError", "DivergenceError", "EvalReport", "FeatureStore", "InteractionSet",
    "ModelScorer", "ParseError", "RandomScorer", "SplitAssignment", "SynthConfig", "TrainConfig", "Triple",
    "TripleSampler", "VbprError", "VbprParams", "evaluate", "filter_min_feedback", "generate", "grid_search",
    "init_params", "load_checkpoint", "load_features", "load_feedback", "model_config", "popularity_scores",
    "project_features", "sample_triple", "save_checkpoint", "score_diff", "score_mf", "score_vbpr",
    "sgd_step_bpr", "sgd_step_hinge", "split_leave_one_out", "train",
]
