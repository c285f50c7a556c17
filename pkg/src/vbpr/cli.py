"""Command-line entry point: ``vbpr {train,evaluate,export-embeddings,generate}``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys

from . import __version__
from .dataset import (FeatureStore, filter_min_feedback, load_features, load_feedback,
                      split_leave_one_out, write_feedback, write_features)
from .errors import DimensionError, ParseError, VbprError
from .evaluator import evaluate
from .models import ModelScorer, RandomScorer, load_checkpoint, popularity_scores, save_checkpoint
from .synthgen import SynthConfig, generate
from .trainer import DEFAULT_LAMBDA_GRID, grid_search, model_config, model_name, train

logger = logging.getLogger("vbpr")

MODELS = ("vbpr", "bpr-mf", "mm-mf")


class UsageError(Exception):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path, command: list[str], config: dict, seed: int, inputs: dict) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {k: {"path": str(v), "sha256": sha256_file(v)} for k, v in inputs.items() if v},
        "version": __version__,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_corpus(path, min_user_feedback: int, seed: int):
    data = filter_min_feedback(load_feedback(path), min_user_feedback)
    return data, split_leave_one_out(data, seed)


def _load_aligned_features(path, item_ids, dimension=None, normalize=False) -> FeatureStore:
    store = load_features(path, dimension, normalize=normalize)
    return store.align(item_ids)


def cmd_train(args) -> int:
    if args.model == "vbpr" and not args.features:
        raise UsageError("--features is required for --model vbpr")
    if args.lr <= 0:
        raise UsageError("--lr must be positive")
    data, split = _load_corpus(args.feedback, args.min_user_feedback, args.seed)
    overrides = dict(learning_rate=args.lr, lambda_theta=args.lambda_theta, lambda_beta=args.lambda_beta,
                     lambda_embed=args.lambda_e, epochs=args.epochs, seed=args.seed,
                     eval_every=args.eval_every)
    cfg = model_config(args.model, args.factors, args.latent_dims, args.visual_dims, **overrides)
    features = None
    if cfg.visual_dim:
        features = _load_aligned_features(args.features, data.item_ids, args.feature_dim, args.normalize_features)

    grid = None
    if args.grid:
        params, cfg, log, results = grid_search(
            data, split, features, cfg, lambda_thetas=args.grid_lambda_theta,
            lambda_embeds=args.grid_lambda_e, learning_rates=args.grid_lr)
        grid = [{"learning_rate": r.config.learning_rate, "lambda_theta": r.config.lambda_theta,
                 "lambda_embed": r.config.lambda_embed, "val_auc": r.val_auc, "best_epoch": r.best_epoch}
                for r in results]
    else:
        params, log = train(data, split, features, cfg)

    meta = {
        "model": model_name(params, cfg.loss),
        "loss": cfg.loss,
        "seed": cfg.seed,
        "epoch": log.best_epoch,
        "min_user_feedback": args.min_user_feedback,
        "normalize_features": bool(args.normalize_features and params.D),
    }
    save_checkpoint(args.out, params, meta)
    log.write_csv(args.log or f"{args.out}.log.csv")
    config = {**cfg.to_dict(), "model": args.model, "min_user_feedback": args.min_user_feedback,
              "normalize_features": args.normalize_features, "feature_dim": params.F}
    if grid is not None:
        config["grid"] = grid
    write_manifest(args.manifest or f"{args.out}.manifest.json", ["vbpr", *args.argv], config, cfg.seed,
                   {"feedback": args.feedback, "features": args.features if params.D else None})
    logger.info("best epoch %d, validation AUC %.4f", log.best_epoch, log.best_val_auc)
    return 0


def cmd_evaluate(args) -> int:
    if bool(args.checkpoint) == bool(args.baseline):
        raise UsageError("give exactly one of --checkpoint or --baseline")
    meta: dict = {}
    params = None
    if args.checkpoint:
        params, meta = load_checkpoint(args.checkpoint)
    split_seed = args.split_seed if args.split_seed is not None else int(meta.get("seed", 0))
    min_fb = args.min_user_feedback if args.min_user_feedback is not None else int(meta.get("min_user_feedback", 5))
    data, split = _load_corpus(args.feedback, min_fb, split_seed)

    if params is not None:
        if params.n_users != data.user_count or params.n_items != data.item_count:
            raise DimensionError(
                f"checkpoint has {params.n_users} users x {params.n_items} items, "
                f"corpus has {data.user_count} x {data.item_count}")
        features = None
        if params.D:
            if not args.features:
                raise UsageError("--features is required for a checkpoint with visual factors")
            features = _checkpoint_features(args.features, data.item_ids, params.F,
                                            bool(meta.get("normalize_features")))
        scorer = ModelScorer(params, features)
        label = meta.get("model", "checkpoint")
    elif args.baseline == "rand":
        scorer = RandomScorer(data.item_count, args.seed)
        label = "rand"
    else:
        scorer = popularity_scores(split, data.item_count)
        label = "mp"

    report = evaluate(scorer, data, split, cold_threshold=args.cold_threshold, target=args.target,
                      threads=args.threads)
    extra = {"model": label, "target": args.target, "split_seed": split_seed}
    if args.out:
        report.write_json(args.out, extra)
    else:
        json.dump({**report.to_dict(), **extra}, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    if args.per_user:
        report.write_per_user_csv(args.per_user, data)
    return 0


def _checkpoint_features(path, item_ids, F: int, normalize: bool) -> FeatureStore:
    try:
        return _load_aligned_features(path, item_ids, F, normalize)
    except ParseError as exc:
        raise DimensionError(f"feature file does not match checkpoint dimension F={F}: {exc}") from None


def cmd_export(args) -> int:
    params, meta = load_checkpoint(args.checkpoint)
    if params.D == 0:
        raise UsageError("checkpoint has no visual factors to export")
    try:
        store = load_features(args.features, params.F, normalize=bool(meta.get("normalize_features")))
    except ParseError as exc:
        raise DimensionError(f"feature file does not match checkpoint dimension F={params.F}: {exc}") from None
    items = load_feedback(args.feedback).item_ids if args.feedback else store.item_ids
    store = store.align(items)
    theta = store.matmul(params.embedding.T)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id", *(f"v{d}" for d in range(params.D))])
        for item, row in zip(items, theta):
            w.writerow([item, *(repr(float(v)) for v in row)])
    if store.missing:
        print(f"warning: {store.missing} items had no features; exported zero rows", file=sys.stderr)
    return 0


def cmd_generate(args) -> int:
    cfg = SynthConfig(users=args.users, items=args.items, F=args.feature_dim, visual_weight=args.visual_weight,
                      cold_fraction=args.cold_fraction, feedback_per_user=args.feedback_per_user,
                      feature_density=args.feature_density, seed=args.seed)
    data, features, truth = generate(cfg)
    os.makedirs(args.out, exist_ok=True)
    write_feedback(os.path.join(args.out, "feedback.tsv"), data)
    write_features(os.path.join(args.out, "features.tsv"), features.to_sparse())
    truth.save(os.path.join(args.out, "truth.json"), cfg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vbpr", description="Visually-aware pairwise ranking from implicit feedback.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train a model and write checkpoint, log and manifest")
    t.add_argument("--feedback", required=True)
    t.add_argument("--features")
    t.add_argument("--feature-dim", type=int, help="feature dimension F (inferred from the file if omitted)")
    t.add_argument("--model", choices=MODELS, default="vbpr")
    t.add_argument("--factors", type=int, default=20, help="total factors, split fifty-fifty for vbpr")
    t.add_argument("--latent-dims", type=int)
    t.add_argument("--visual-dims", type=int)
    t.add_argument("--lr", type=float, default=0.005)
    t.add_argument("--lambda-theta", type=float, default=1.0)
    t.add_argument("--lambda-beta", type=float, help="defaults to --lambda-theta")
    t.add_argument("--lambda-e", type=float, default=0.0)
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--eval-every", type=int, default=1)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--min-user-feedback", type=int, default=5)
    t.add_argument("--normalize-features", action="store_true")
    t.add_argument("--grid", action="store_true", help="select hyperparameters by validation AUC")
    t.add_argument("--grid-lambda-theta", type=float, nargs="+", default=list(DEFAULT_LAMBDA_GRID))
    t.add_argument("--grid-lambda-e", type=float, nargs="+")
    t.add_argument("--grid-lr", type=float, nargs="+")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--log", help="training log CSV (default OUT.log.csv)")
    t.add_argument("--manifest", help="run manifest JSON (default OUT.manifest.json)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", parents=[common], help="AUC report for a checkpoint or a baseline")
    e.add_argument("--feedback", required=True)
    e.add_argument("--features")
    e.add_argument("--checkpoint")
    e.add_argument("--baseline", choices=("rand", "mp"))
    e.add_argument("--seed", type=int, default=0, help="seed of the rand baseline")
    e.add_argument("--split-seed", type=int, help="defaults to the checkpoint's training seed, else 0")
    e.add_argument("--min-user-feedback", type=int, help="defaults to the checkpoint's value, else 5")
    e.add_argument("--cold-threshold", type=int, default=5)
    e.add_argument("--target", choices=("test", "validation"), default="test")
    e.add_argument("--threads", type=int, default=1)
    e.add_argument("--out", help="report JSON (stdout if omitted)")
    e.add_argument("--per-user", help="per-user AUC CSV")
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("export-embeddings", parents=[common], help="write per-item visual factors E f_i as CSV")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--feedback", help="item universe; items without features get zero rows")
    x.add_argument("--features", required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic corpus with a planted visual signal")
    g.add_argument("--users", type=int, default=1000)
    g.add_argument("--items", type=int, default=500)
    g.add_argument("--feature-dim", type=int, default=64)
    g.add_argument("--visual-weight", type=float, default=0.7)
    g.add_argument("--cold-fraction", type=float, default=0.5)
    g.add_argument("--feedback-per-user", type=int, default=5)
    g.add_argument("--feature-density", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (VbprError, OSError) as exc:
        print(f"vbpr: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
