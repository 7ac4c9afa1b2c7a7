"""Command line entry point: ``argue {cluster,train,score,experiment,ablation}``."""

import argparse
import json
import sys
from pathlib import Path

from . import clustering
from .errors import ArgueError, StageError
from .experiment import (
    ExperimentConfig,
    _write_ablation,
    _write_scores,
    emit_gate_ablation,
    fit_models,
    format_report,
    prepare_run,
    run_experiment,
    run_sweep,
)
from .baseline import ae_score
from .datasets import write_split_manifest
from .model import anomaly_scores
from .persistence import load_model, save_model
from .trainer import JsonLinesLog


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    doc = cfg.to_dict()
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.mode is not None:
        doc["train"] = {**doc["train"], "mode": "semi_supervised" if args.mode == "semi" else "unsupervised"}
    if args.out is not None:
        doc["output_dir"] = args.out
    if doc["output_dir"] is None:
        doc["output_dir"] = "argue_out"
    return ExperimentConfig.from_dict(doc)


def cmd_cluster(cfg, args):
    prep = prepare_run(cfg, cfg.seed)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "assignment.csv"
    rows = prep.split.train.row_index[~prep.known]
    clustering.write_assignment(path, prep.assignment, rows)
    counts = prep.assignment.counts().tolist()
    print(f"{prep.assignment.strategy}: {prep.assignment.expert_count} experts, sizes {counts} -> {path}")


def cmd_train(cfg, args):
    prep = prepare_run(cfg, cfg.seed)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with JsonLinesLog(out / "train_log.jsonl") as log:
        fitted = fit_models(cfg, prep, log)
    save_model(out / "argue.npz", fitted.model)
    save_model(out / "ae.npz", fitted.ae)
    write_split_manifest(out / "split.json", prep.split, prep.scaler)
    clustering.write_assignment(out / "assignment.csv", prep.assignment, prep.split.train.row_index[~prep.known])
    print(f"trained {fitted.model.expert_count} experts; models in {out}")


def _model_path(cfg, args, name):
    return Path(args.model) if args.model else Path(cfg.output_dir) / name


def cmd_score(cfg, args):
    prep = prepare_run(cfg, cfg.seed)
    model = load_model(_model_path(cfg, args, "argue.npz"))
    X = prep.X_test
    scores = ae_score(model, X) if hasattr(model, "network") else anomaly_scores(model, X)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "scores.csv"
    _write_scores(path, prep.split.test.row_index, scores, prep.y_test)
    print(f"{len(scores)} scores -> {path}")


def cmd_ablation(cfg, args):
    prep = prepare_run(cfg, cfg.seed)
    model = load_model(_model_path(cfg, args, "argue.npz"), expect="argue")
    table = emit_gate_ablation(model, prep.X_test, prep.test_groups)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_ablation(out / "gate_ablation.csv", table)
    for g, row in table.items():
        print(f"{g:<12}" + " ".join(f"{v:.4f}" for v in row))


def cmd_experiment(cfg, args):
    if cfg.sweep_clusters:
        rows = run_sweep(cfg, cfg.sweep_clusters)
        for k, s in rows.items():
            print(f"k={k}: ARGUE AUC {s['argue']['auc']['mean']:.4f}  AE AUC {s['baseline']['auc']['mean']:.4f}")
        return
    report = run_experiment(cfg)
    print(format_report({k: v for k, v in report.items() if not k.startswith("_")}), end="")


COMMANDS = {
    "cluster": cmd_cluster,
    "train": cmd_train,
    "score": cmd_score,
    "experiment": cmd_experiment,
    "ablation": cmd_ablation,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="argue", description="Gated multi-expert anomaly detection.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--mode", choices=["unsupervised", "semi"])
        if name in ("score", "ablation"):
            p.add_argument("--model", help="model file (default: <out>/argue.npz)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        COMMANDS[args.command](cfg, args)
    except StageError as exc:
        print(f"argue {args.command}: error {exc}", file=sys.stderr)
        return 2
    except ArgueError as exc:
        print(f"argue {args.command}: error [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
