"""Config-driven experiment pipeline.

One run is: split -> scale -> cluster -> pretrain -> detector training ->
score -> metrics, for ARGUE and the plain AE baseline on identical data.
``run_experiment`` repeats this with seeds ``seed + run_index`` and writes
models, split manifests, score files, training logs and the report.
"""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import clustering
from .baseline import ae_score, train_ae
from .datasets import (
    CsvSchema,
    Dataset,
    SplitSpec,
    apply_scale,
    fit_scale,
    load_csv,
    load_idx,
    make_split,
    mark_anomalous_classes,
    synth_class_universe,
    synth_gaussian_mixture,
    write_split_manifest,
)
from .errors import ArgueError, ConfigError, StageError
from .metrics import evaluate, wilcoxon_signed_rank
from .model import ArgueConfig, anomaly_scores, build, gate_outputs
from .persistence import save_model
from .trainer import JsonLinesLog, TrainConfig, train_argue

SOURCES = ("synthetic", "universe", "csv", "idx")

DEFAULT_MODEL = {"encoder_dims": [16, 12, 8], "alarm_dims": [64, 32], "gate_dims": [64, 32]}


@dataclass
class ExperimentConfig:
    dataset: dict
    seed: int
    clustering: dict = field(default_factory=lambda: {"strategy": "by_class"})
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    split: dict = field(default_factory=dict)
    repeat_count: int = 1
    output_dir: str | None = None
    validation_fraction: float = 0.0
    # normal-cluster counts to sweep over (``universe`` sources only)
    sweep_clusters: list | None = None

    def __post_init__(self):
        present = [k for k in SOURCES if k in self.dataset]
        if len(present) != 1:
            raise ConfigError(f"dataset needs exactly one source out of {SOURCES}, found {present}")
        if self.repeat_count < 1:
            raise ConfigError("repeat_count must be >= 1")
        if self.clustering.get("strategy") not in clustering.STRATEGIES:
            raise ConfigError(f"clustering.strategy must be one of {clustering.STRATEGIES}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in [0, 1)")
        self.seed = int(self.seed)
        self.train_config(0)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if "seed" not in doc:
            raise ConfigError("config must set 'seed'")
        known = {"dataset", "seed", "clustering", "model", "train", "split", "repeat_count", "output_dir", "validation_fraction", "sweep_clusters"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "seed": self.seed,
            "clustering": self.clustering,
            "model": self.model,
            "train": self.train,
            "split": self.split,
            "repeat_count": self.repeat_count,
            "output_dir": self.output_dir,
            "validation_fraction": self.validation_fraction,
            "sweep_clusters": self.sweep_clusters,
        }

    def train_config(self, seed) -> TrainConfig:
        t = dict(self.train)
        mode = t.pop("mode", "unsupervised")
        budget = self.split.get("known_anomaly_budget", 0) if mode != "unsupervised" else 0
        return TrainConfig(**t, mode=mode, known_anomaly_budget=budget, seed=seed)

    def split_spec(self, seed) -> SplitSpec:
        s = dict(self.split)
        if self.train_config(seed).mode == "unsupervised":
            s["known_anomaly_budget"] = 0
        return SplitSpec(**s, seed=seed)

    def model_dims(self) -> dict:
        return {**DEFAULT_MODEL, **self.model}


def load_source(source: dict, seed: int) -> Dataset:
    if "synthetic" in source:
        p = dict(source["synthetic"])
        p.setdefault("seed", seed)
        return synth_gaussian_mixture(**p)
    if "universe" in source:
        p = dict(source["universe"])
        p.setdefault("seed", seed)
        return synth_class_universe(**p)
    if "csv" in source:
        p = dict(source["csv"])
        path = p.pop("path")
        return load_csv(path, CsvSchema(**p))
    p = source["idx"]
    ds = load_idx(p["images"], p["labels"])
    if "limit" in p:
        ds = ds.take(np.arange(min(int(p["limit"]), len(ds))))
    return mark_anomalous_classes(ds, p.get("normal_classes", [0, 1, 2, 3, 4]))


@dataclass
class PreparedRun:
    seed: int
    split: object
    scaler: object
    X_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    known: np.ndarray
    # expert index per train row; -1 for known anomalies
    expert_index: np.ndarray
    assignment: clustering.ClusterAssignment
    test_groups: np.ndarray
    # expert index per test row when it is determined by the strategy, else -1
    test_expert: np.ndarray


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (ArgueError, ValueError, KeyError, IndexError, OSError) as exc:
        raise StageError(name, exc) from exc


def _normal_classes(dataset: Dataset):
    labels = dataset.class_labels[np.asarray(dataset.anomaly_labels) == 0]
    return np.unique(labels)


def prepare_run(cfg: ExperimentConfig, seed: int, dataset: Dataset | None = None) -> PreparedRun:
    ds = _stage("load", load_source, cfg.dataset, seed) if dataset is None else dataset
    split = _stage("split", make_split, ds, cfg.split_spec(seed))
    train, test = split.train, split.test
    known = np.asarray(train.anomaly_labels, bool)
    strategy = cfg.clustering["strategy"]

    attr_values = None
    if strategy == "by_attribute":
        column = cfg.clustering["column"]
        assignment, train_reduced = _stage(
            "cluster", clustering.assign_by_attribute, train.take(np.flatnonzero(~known)), column,
            cfg.clustering.get("max_values", clustering.MAX_ATTRIBUTE_VALUES),
        )
        attr_values = assignment.values
        train = train.drop_feature_column(column)
        test = test.drop_feature_column(column)

    scaler = _stage("scale", fit_scale, train.features[~known])
    X_train = apply_scale(scaler, train.features)
    X_test = apply_scale(scaler, test.features)

    expert_index = np.full(len(train), -1, dtype=np.int64)
    test_expert = np.full(len(test), -1, dtype=np.int64)
    if strategy == "by_class":
        if ds.class_labels is None:
            raise StageError("cluster", ConfigError("by_class needs class labels"))
        classes = _normal_classes(ds)
        lookup = {c: j for j, c in enumerate(classes.tolist())}
        tr_cls = train.class_labels.tolist()
        for i in np.flatnonzero(~known):
            expert_index[i] = lookup.get(tr_cls[i], -1)
        missing = (~known) & (expert_index < 0)
        if missing.any():
            # unlabelled polluting rows: closest expert centroid
            labelled = (~known) & (expert_index >= 0)
            expert_index[missing] = clustering.nearest_expert(
                X_train[missing], X_train[labelled], expert_index[labelled], len(classes)
            )
        assignment = _stage("cluster", clustering.ClusterAssignment, expert_index[~known], len(classes), "by_class", classes.tolist())
        te_cls = test.class_labels.tolist()
        test_expert = np.array([lookup.get(c, -1) for c in te_cls], dtype=np.int64)
    elif strategy == "by_attribute":
        expert_index[~known] = assignment.expert_index
        lookup = {v: j for j, v in enumerate(attr_values)}
        te_attr = test.attributes[cfg.clustering["column"]].tolist()
        test_expert = np.array([lookup.get(v, -1) for v in te_attr], dtype=np.int64)
    else:
        k = int(cfg.clustering.get("k", 2))
        assignment = _stage("cluster", clustering.assign_by_algorithm, X_train[~known], k, seed)
        expert_index[~known] = assignment.expert_index
        test_expert = clustering._kernels.nearest_center(X_test, assignment.centroids)[0]

    y_test = np.asarray(test.anomaly_labels, dtype=np.int64)
    if test.class_labels is not None:
        groups = np.array([str(c) for c in test.class_labels.tolist()], dtype=object)
    else:
        groups = np.array([f"expert{j}" for j in test_expert], dtype=object)
    groups[y_test == 1] = "anomalous"
    return PreparedRun(seed, split, scaler, X_train, X_test, y_test, known, expert_index, assignment, groups, test_expert)


def emit_gate_ablation(model, X, groups) -> dict:
    """Mean gate output per group, one row of ``J + 1`` weights per group.

    Normal groups come first in sorted order, ``anomalous`` last; empty groups
    are skipped.
    """
    groups = np.asarray(groups, dtype=object)
    p = gate_outputs(model, X)
    names = sorted({g for g in groups.tolist() if g != "anomalous"}, key=_group_key)
    if "anomalous" in set(groups.tolist()):
        names.append("anomalous")
    table = {}
    for g in names:
        rows = groups == g
        if not rows.any():
            warnings.warn(f"group {g!r} is empty", stacklevel=2)
            continue
        table[g] = p[rows].mean(axis=0).tolist()
    return table


def _group_key(g):
    try:
        return (0, float(g), g)
    except ValueError:
        return (1, 0.0, g)


def gate_recovery(model, X, expert) -> float:
    """Fraction of rows whose largest expert gate weight is their own expert."""
    rows = expert >= 0
    if not rows.any():
        return float("nan")
    p = gate_outputs(model, X[rows])
    return float(np.mean(np.argmax(p[:, :-1], axis=1) == expert[rows]))


def _write_scores(path, row_index, scores, labels):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("row_index,anomaly_score,label\n")
        for r, s, y in zip(row_index, scores, labels):
            fh.write(f"{int(r)},{float(s)!r},{int(y)}\n")


def _write_ablation(path, table):
    with open(path, "w", encoding="utf-8") as fh:
        if not table:
            return
        width = len(next(iter(table.values())))
        fh.write("group," + ",".join([f"expert{j}" for j in range(width - 1)] + ["shortcut"]) + "\n")
        for g, row in table.items():
            fh.write(f"{g}," + ",".join(repr(float(v)) for v in row) + "\n")


@dataclass
class FittedModels:
    model: object
    ae: object
    history: dict
    ae_history: list
    X_val: np.ndarray | None = None


def fit_models(cfg: ExperimentConfig, prep: PreparedRun, log=None) -> FittedModels:
    """Train ARGUE and the AE baseline on a prepared run."""
    seed = prep.seed
    dims = cfg.model_dims()
    tcfg = _stage("config", cfg.train_config, seed)
    J = prep.assignment.expert_count
    acfg = _stage("build", ArgueConfig, prep.X_train.shape[1], dims["encoder_dims"], J, dims["alarm_dims"], dims["gate_dims"])
    model = build(acfg, seed)
    model.scaler = prep.scaler
    X_fit, index_fit, known = prep.X_train, prep.expert_index, prep.known
    X_val = None
    if cfg.validation_fraction > 0:
        rng = np.random.default_rng([seed, 2])
        cand = np.flatnonzero(~known)
        val = rng.choice(cand, size=max(1, int(cfg.validation_fraction * cand.size)), replace=False)
        keep = np.setdiff1d(np.arange(len(X_fit)), val)
        X_val = X_fit[val]
        X_fit, index_fit, known = X_fit[keep], index_fit[keep], known[keep]
    history = _stage("train", train_argue, model, X_fit, index_fit, tcfg, known_anomaly=known, log=log)
    ae, ae_hist = _stage("baseline", train_ae, X_fit[~known], tcfg, dims["encoder_dims"], seed, prep.scaler, log)
    return FittedModels(model, ae, history, ae_hist, X_val)


def run_once(cfg: ExperimentConfig, run_index: int, out_dir: Path | None = None, dataset=None) -> dict:
    seed = cfg.seed + run_index
    prep = prepare_run(cfg, seed, dataset)

    run_dir = None
    log = None
    if out_dir is not None:
        run_dir = Path(out_dir) / f"run_{run_index:02d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        log = JsonLinesLog(run_dir / "train_log.jsonl")
    try:
        fitted = fit_models(cfg, prep, log)
    finally:
        if log is not None:
            log.close()
    model, ae = fitted.model, fitted.ae

    s_argue = _stage("score", anomaly_scores, model, prep.X_test)
    s_ae = _stage("score", ae_score, ae, prep.X_test)
    ev_argue = _stage("metrics", evaluate, s_argue, prep.y_test)
    ev_ae = _stage("metrics", evaluate, s_ae, prep.y_test)
    ablation = emit_gate_ablation(model, prep.X_test, prep.test_groups)
    normals = prep.y_test == 0
    result = {
        "run": run_index,
        "seed": seed,
        "experts": model.expert_count,
        "argue": ev_argue.to_dict(),
        "baseline": ev_ae.to_dict(),
        "gate_recovery": gate_recovery(model, prep.X_test[normals], prep.test_expert[normals]),
        "gate_ablation": ablation,
        "final_pretrain_loss": fitted.history["pretrain"][-1],
        "final_detector_loss": fitted.history["detector"][-1],
        "final_baseline_loss": fitted.ae_history[-1],
    }
    if fitted.X_val is not None:
        result["validation_mean_score"] = float(np.mean(anomaly_scores(model, fitted.X_val)))

    if run_dir is not None:
        row_index = prep.split.test.row_index
        save_model(run_dir / "argue.npz", model)
        save_model(run_dir / "ae.npz", ae)
        write_split_manifest(run_dir / "split.json", prep.split, prep.scaler)
        clustering.write_assignment(run_dir / "assignment.csv", prep.assignment, prep.split.train.row_index[~prep.known])
        _write_scores(run_dir / "scores.csv", row_index, s_argue, prep.y_test)
        _write_scores(run_dir / "ae_scores.csv", row_index, s_ae, prep.y_test)
        _write_ablation(run_dir / "gate_ablation.csv", ablation)
    result["_model"] = model
    result["_ae"] = ae
    result["_scores"] = (s_argue, s_ae, prep.y_test)
    return result


def _summary(values):
    v = np.asarray(values, dtype=np.float64)
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return {"mean": float(np.mean(v)), "std": std}


def summarize(runs) -> dict:
    out = {}
    for who in ("argue", "baseline"):
        out[who] = {m: _summary([r[who][m] for r in runs]) for m in ("auc", "ap")}
    a = [r["argue"]["auc"] for r in runs]
    b = [r["baseline"]["auc"] for r in runs]
    out["wilcoxon_p_auc"] = wilcoxon_signed_rank(a, b)
    a = [r["argue"]["ap"] for r in runs]
    b = [r["baseline"]["ap"] for r in runs]
    out["wilcoxon_p_ap"] = wilcoxon_signed_rank(a, b)
    # per-group gate mass averaged over runs
    groups = {}
    for r in runs:
        for g, row in r["gate_ablation"].items():
            groups.setdefault(g, []).append(row)
    out["gate_ablation"] = {g: np.mean(rows, axis=0).tolist() for g, rows in groups.items()}
    out["gate_recovery"] = _summary([r["gate_recovery"] for r in runs])
    return out


def format_report(report: dict) -> str:
    s = report["summary"]
    lines = [
        f"runs: {len(report['runs'])}   mode: {report['mode']}   seed: {report['seed']}",
        "",
        f"{'method':<10}{'AUC':>18}{'AP':>18}",
    ]
    for who, label in (("argue", "ARGUE"), ("baseline", "AE")):
        auc, ap = s[who]["auc"], s[who]["ap"]
        lines.append(
            f"{label:<10}{auc['mean']:>10.4f} ± {auc['std']:<5.3f}{ap['mean']:>10.4f} ± {ap['std']:<5.3f}"
        )
    lines.append("")
    lines.append(f"Wilcoxon p (AUC, ARGUE vs AE): {s['wilcoxon_p_auc']:.4g}")
    lines.append(f"gate argmax recovery: {s['gate_recovery']['mean']:.4f}")
    lines.append("")
    lines.append("mean gate mass per group")
    for g, row in s["gate_ablation"].items():
        lines.append(f"  {g:<12}" + " ".join(f"{v:7.4f}" for v in row))
    lines.append("")
    lines.append(f"{'run':<5}{'seed':<8}{'ARGUE AUC':>11}{'AE AUC':>10}{'ARGUE AP':>11}{'AE AP':>9}")
    for r in report["runs"]:
        lines.append(
            f"{r['run']:<5}{r['seed']:<8}{r['argue']['auc']:>11.4f}{r['baseline']['auc']:>10.4f}"
            f"{r['argue']['ap']:>11.4f}{r['baseline']['ap']:>9.4f}"
        )
    return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> dict:
    out_dir = out_dir if out_dir is not None else cfg.output_dir
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    runs = [run_once(cfg, r, out_dir) for r in range(cfg.repeat_count)]
    public = [{k: v for k, v in r.items() if not k.startswith("_")} for r in runs]
    report = {
        "seed": cfg.seed,
        "mode": cfg.train_config(cfg.seed).mode,
        "runs": public,
        "summary": summarize(public),
    }
    if out_dir is not None:
        (out_dir / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
        (out_dir / "report.txt").write_text(format_report(report))
    report["_runs"] = runs
    return report


def run_sweep(cfg: ExperimentConfig, cluster_counts, out_dir=None) -> dict:
    """Repeat the experiment for each normal-cluster count of a ``universe`` source."""
    if "universe" not in cfg.dataset:
        raise ConfigError("a cluster sweep needs a 'universe' dataset source")
    out_dir = out_dir if out_dir is not None else cfg.output_dir
    rows = {}
    for k in cluster_counts:
        doc = cfg.to_dict()
        doc["dataset"] = {"universe": {**cfg.dataset["universe"], "k_clusters": int(k)}}
        sub = None if out_dir is None else Path(out_dir) / f"k{int(k)}"
        doc["output_dir"] = None if sub is None else str(sub)
        doc["sweep_clusters"] = None
        report = run_experiment(ExperimentConfig.from_dict(doc), sub)
        rows[int(k)] = report["summary"]
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "sweep.csv", "w", encoding="utf-8") as fh:
            fh.write("k,argue_auc_mean,argue_auc_std,ae_auc_mean,ae_auc_std\n")
            for k, s in rows.items():
                fh.write(
                    f"{k},{s['argue']['auc']['mean']!r},{s['argue']['auc']['std']!r},"
                    f"{s['baseline']['auc']['mean']!r},{s['baseline']['auc']['std']!r}\n"
                )
    return rows
