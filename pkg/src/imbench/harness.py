"""Experiment orchestration: configuration, depth tuning, the fold-by-
repetition benchmark matrix, durable JSONL records with resume, aggregation,
and the statistical comparison report.

Every job (dataset, method, fold, repetition) is independent and owns a seed
derived by hashing its coordinates with the master seed, so results are
reproducible record-by-record regardless of execution order or worker count.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import data, imbalance, metrics, objectives, stats
from .nn import MlpModel

RECORD_VERSION = 1
DEPTH_CHOICES = (2, 3, 4, 5, 6)
TUNE_FOLDS = 5
WORKERS_ENV_VAR = "IMBENCH_WORKERS"


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from named coordinates (order-sensitive)."""
    payload = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def batch_size_rule(n_samples: int) -> int:
    """Default minibatch size: ceil(N/50) clamped to [8, 1024]."""
    if n_samples < 1:
        raise ValueError("dataset must be non-empty")
    return min(1024, max(8, math.ceil(n_samples / 50)))


@dataclass
class ExperimentConfig:
    datasets: list[str]
    methods: list[str] = field(default_factory=lambda: list(imbalance.METHODS))
    depth: int | str = "tune"
    width: int = 50
    dropout: float = 0.5
    learning_rate: float = 0.001
    patience: int = 10
    max_epochs: int = 200
    folds: int = 10
    repetitions: int = 5
    batch_size: int | None = None
    val_fraction: float = 0.1
    master_seed: int = 0
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        if not self.datasets:
            raise ValueError("config needs at least one dataset path")
        bad = [m for m in self.methods if m not in imbalance.METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; expected subset of {imbalance.METHODS}")
        if not self.methods:
            raise ValueError("config needs at least one method")
        if self.depth != "tune":
            if not isinstance(self.depth, int) or self.depth < 1:
                raise ValueError('depth must be a positive integer or "tune"')
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.batch_size is not None and self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 when given")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ExperimentRecord:
    dataset: str
    method: str
    fold: int
    rep: int
    seed: int
    depth: int
    scores: metrics.EvalScores
    epochs_run: int
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "v": RECORD_VERSION,
            "dataset": self.dataset,
            "method": self.method,
            "fold": self.fold,
            "rep": self.rep,
            "seed": self.seed,
            "depth": self.depth,
            "epochs_run": self.epochs_run,
            "wall_time": self.wall_time,
            "scores": self.scores.to_dict(),
        }


@dataclass
class TuneReport:
    dataset: str
    depth_aucs: dict[int, float]
    selected_depth: int

    def __post_init__(self):
        if set(self.depth_aucs) != set(DEPTH_CHOICES):
            raise ValueError(f"expected one AUC per depth in {DEPTH_CHOICES}")
        best = max(self.depth_aucs.values())
        if self.depth_aucs[self.selected_depth] != best:
            raise ValueError("selected depth must attain the maximum mean AUC")

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "depth_aucs": {str(d): v for d, v in self.depth_aucs.items()},
            "selected_depth": self.selected_depth,
        }


@dataclass
class RunSummary:
    records_path: str
    n_jobs: int
    n_completed: int
    n_skipped: int
    n_failed: int
    depths: dict[str, int]


def load_dataset(path) -> data.Dataset:
    """Load by extension: .dat as KEEL, anything else as headered CSV with the
    class in the last column."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    if path.suffix.lower() == ".dat":
        return data.load_keel_dat(path)
    return data.load_csv(path, label_column=-1)


def _fit_and_score(
    features: np.ndarray,
    labels: np.ndarray,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    method: str,
    depth: int,
    config: ExperimentConfig,
    job_seed: int,
    n_total: int,
):
    """Standardize, carve the early-stop subset, rebalance, train, score."""
    (x_train, x_test), _, _ = data.standardize(features[train_idx], features[test_idx])
    fit_abs, val_abs = data.train_val_split(
        train_idx,
        labels,
        val_fraction=config.val_fraction,
        rng=np.random.default_rng(derive_seed(job_seed, "val")),
    )
    fit_pos = np.searchsorted(train_idx, fit_abs)
    val_pos = np.searchsorted(train_idx, val_abs)
    x_fit, y_fit = x_train[fit_pos], labels[fit_abs]
    x_val, y_val = x_train[val_pos], labels[val_abs]
    x_bal, y_bal, weights = imbalance.apply_method(
        method, x_fit, y_fit, np.random.default_rng(derive_seed(job_seed, "sample"))
    )
    model = MlpModel(
        input_dim=features.shape[1],
        depth=depth,
        width=config.width,
        dropout_rate=config.dropout,
        rng=np.random.default_rng(derive_seed(job_seed, "model")),
    )
    train_config = objectives.TrainConfig(
        objective="gdro" if method == "gdro" else "erm",
        epochs=config.max_epochs,
        batch_size=config.batch_size or batch_size_rule(n_total),
        learning_rate=config.learning_rate,
        patience=config.patience,
        class_weights=weights,
        seed=derive_seed(job_seed, "loop"),
    )
    report = objectives.train(model, x_bal, y_bal, x_val, y_val, train_config)
    scores = metrics.evaluate_scores(model.predict_proba(x_test), labels[test_idx])
    return scores, report


def tune_architecture(dataset: data.Dataset, config: ExperimentConfig) -> TuneReport:
    """Pick network depth by mean held-out ROC-AUC.

    A seeded stratified 80% partition is split once into 5 folds; every depth
    candidate trains with plain ERM on the identical folds; the depth with
    the best mean AUC wins, ties going to the shallower network.
    """
    base_seed = derive_seed(config.master_seed, dataset.name, "tune")
    part_rng = np.random.default_rng(derive_seed(base_seed, "partition"))
    tune_idx, _ = data.train_val_split(
        np.arange(dataset.n_samples), dataset.labels, val_fraction=0.2, rng=part_rng
    )
    split = data.stratified_kfold(
        dataset.labels[tune_idx], TUNE_FOLDS, np.random.default_rng(derive_seed(base_seed, "folds"))
    )
    depth_aucs = {}
    for depth in DEPTH_CHOICES:
        aucs = []
        for fold in range(TUNE_FOLDS):
            rel_train, rel_test = split.train_test_indices(fold)
            scores, _ = _fit_and_score(
                dataset.features,
                dataset.labels,
                np.sort(tune_idx[rel_train]),
                np.sort(tune_idx[rel_test]),
                method="erm",
                depth=depth,
                config=config,
                job_seed=derive_seed(base_seed, depth, fold),
                n_total=dataset.n_samples,
            )
            aucs.append(scores.roc_auc)
        depth_aucs[depth] = float(np.mean(aucs))
    selected = max(DEPTH_CHOICES, key=lambda d: (depth_aucs[d], -d))
    return TuneReport(dataset=dataset.name, depth_aucs=depth_aucs, selected_depth=selected)


def _execute_job(spec: dict) -> dict:
    """Run one (dataset, method, fold, rep) job; never raises (error record)."""
    key = {
        "v": RECORD_VERSION,
        "dataset": spec["dataset"],
        "method": spec["method"],
        "fold": spec["fold"],
        "rep": spec["rep"],
        "seed": spec["job_seed"],
    }
    started = time.perf_counter()
    try:
        scores, report = _fit_and_score(
            spec["features"],
            spec["labels"],
            spec["train_idx"],
            spec["test_idx"],
            method=spec["method"],
            depth=spec["depth"],
            config=spec["config"],
            job_seed=spec["job_seed"],
            n_total=spec["n_total"],
        )
    except Exception as exc:  # job isolation: failures become records
        key["error"] = f"{type(exc).__name__}: {exc}"
        return key
    key.update(
        depth=spec["depth"],
        epochs_run=report.epochs_run,
        wall_time=time.perf_counter() - started,
        scores=scores.to_dict(),
    )
    return key


def record_key(record: dict):
    return (record["dataset"], record["method"], record["fold"], record["rep"])


def load_records(path) -> list[dict]:
    """Read a JSONL record file; a partial trailing line (interrupted write)
    is dropped, corruption anywhere else is an error."""
    path = Path(path)
    if not path.exists():
        return []
    lines = path.read_text(encoding="utf-8").splitlines()
    records = []
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            if i == len(lines) - 1:
                break
            raise ValueError(f"{path}: corrupt record on line {i + 1}")
    return records


def _repair_trailing_line(path) -> None:
    """Make an interrupted record file safe to append to: a complete final
    record that lost its newline gets one, a partial write is truncated."""
    path = Path(path)
    if not path.exists():
        return
    raw = path.read_bytes()
    if not raw or raw.endswith(b"\n"):
        return
    cut = raw.rfind(b"\n") + 1
    try:
        json.loads(raw[cut:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        path.write_bytes(raw[:cut])
    else:
        path.write_bytes(raw + b"\n")


def _append_record(fh, record: dict) -> None:
    fh.write(json.dumps(record, sort_keys=True) + "\n")
    fh.flush()
    os.fsync(fh.fileno())


def resolve_workers(config: ExperimentConfig) -> int:
    override = os.environ.get(WORKERS_ENV_VAR)
    if override is not None:
        workers = int(override)
        if workers < 1:
            raise ValueError(f"{WORKERS_ENV_VAR} must be >= 1, got {override!r}")
        return workers
    return config.workers


def run_experiment(config: ExperimentConfig, progress=None) -> RunSummary:
    """Execute the dataset x method x repetition x fold matrix.

    Records append durably to <output_dir>/records.jsonl as each job ends;
    keys already present there are skipped, so an interrupted run resumes
    where it stopped. Job failures are appended with an "error" marker and
    the run continues.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "records.jsonl"
    _repair_trailing_line(records_path)
    done = {record_key(r) for r in load_records(records_path)}

    say = progress if progress is not None else (lambda _msg: None)
    datasets = [load_dataset(p) for p in config.datasets]
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate dataset names after loading: {names}")

    depths: dict[str, int] = {}
    for ds in datasets:
        if config.depth == "tune":
            report = tune_architecture(ds, config)
            depths[ds.name] = report.selected_depth
            (out_dir / f"tune_{ds.name}.json").write_text(
                json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
            )
            say(f"tuned {ds.name}: depth {report.selected_depth}")
        else:
            depths[ds.name] = int(config.depth)

    jobs = []
    for ds in datasets:
        for rep in range(config.repetitions):
            split = data.stratified_kfold(
                ds.labels,
                config.folds,
                np.random.default_rng(derive_seed(config.master_seed, ds.name, rep)),
            )
            fold_indices = [split.train_test_indices(f) for f in range(config.folds)]
            for method in config.methods:
                for fold in range(config.folds):
                    if (ds.name, method, fold, rep) in done:
                        continue
                    train_idx, test_idx = fold_indices[fold]
                    jobs.append(
                        {
                            "dataset": ds.name,
                            "method": method,
                            "fold": fold,
                            "rep": rep,
                            "features": ds.features,
                            "labels": ds.labels,
                            "train_idx": train_idx,
                            "test_idx": test_idx,
                            "depth": depths[ds.name],
                            "config": config,
                            "n_total": ds.n_samples,
                            "job_seed": derive_seed(
                                config.master_seed, ds.name, method, rep, fold
                            ),
                        }
                    )

    n_total_jobs = len(datasets) * len(config.methods) * config.folds * config.repetitions
    n_failed = 0
    n_completed = 0
    workers = resolve_workers(config)
    with open(records_path, "a", encoding="utf-8") as fh:
        if workers == 1:
            for spec in jobs:
                record = _execute_job(spec)
                _append_record(fh, record)
                n_completed += 1
                n_failed += "error" in record
                say(f"[{n_completed}/{len(jobs)}] {record_key(record)}")
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for record in pool.map(_execute_job, jobs, chunksize=1):
                    _append_record(fh, record)
                    n_completed += 1
                    n_failed += "error" in record
                    say(f"[{n_completed}/{len(jobs)}] {record_key(record)}")

    return RunSummary(
        records_path=str(records_path),
        n_jobs=n_total_jobs,
        n_completed=n_completed,
        n_skipped=n_total_jobs - len(jobs),
        n_failed=n_failed,
        depths=depths,
    )


def aggregate(records: list[dict]) -> dict:
    """Per-dataset mean and std for every metric and method, plus the overall
    mean of per-dataset means and rank-first counts (ties credit all)."""
    clean: dict[tuple, dict] = {}
    for r in records:
        if "error" in r:
            continue
        clean[record_key(r)] = r
    if not clean:
        raise ValueError("no successful records to aggregate")
    rows = list(clean.values())
    datasets = sorted({r["dataset"] for r in rows})
    methods = sorted({r["method"] for r in rows})

    per_dataset: dict[str, dict] = {}
    for ds in datasets:
        per_dataset[ds] = {}
        for m in methods:
            values = [r["scores"] for r in rows if r["dataset"] == ds and r["method"] == m]
            if not values:
                continue
            cell = {}
            for metric in metrics.METRIC_NAMES:
                arr = np.array([v[metric] for v in values])
                cell[metric] = {
                    "mean": float(arr.mean()),
                    "std": float(arr.std()),
                    "n": len(arr),
                }
            per_dataset[ds][m] = cell

    overall: dict[str, dict] = {m: {} for m in methods}
    for metric in metrics.METRIC_NAMES:
        means = {
            m: [per_dataset[ds][m][metric]["mean"] for ds in datasets if m in per_dataset[ds]]
            for m in methods
        }
        rank_first = {m: 0 for m in methods}
        for ds in datasets:
            cell_means = {m: per_dataset[ds][m][metric]["mean"] for m in methods if m in per_dataset[ds]}
            if not cell_means:
                continue
            best = max(cell_means.values())
            for m, v in cell_means.items():
                if abs(v - best) <= 1e-12:
                    rank_first[m] += 1
        for m in methods:
            overall[m][metric] = {
                "mean": float(np.mean(means[m])) if means[m] else float("nan"),
                "rank_first": rank_first[m],
            }

    return {
        "v": RECORD_VERSION,
        "datasets": datasets,
        "methods": methods,
        "metrics": list(metrics.METRIC_NAMES),
        "per_dataset": per_dataset,
        "overall": overall,
    }


def score_table(records: list[dict], metric: str) -> stats.ScoreTable:
    """Datasets x methods table of per-dataset mean scores for one metric."""
    if metric not in metrics.METRIC_NAMES:
        raise ValueError(f"unknown metric {metric!r}; expected one of {metrics.METRIC_NAMES}")
    agg = aggregate(records)
    datasets, methods = agg["datasets"], agg["methods"]
    table = np.empty((len(datasets), len(methods)))
    for i, ds in enumerate(datasets):
        for j, m in enumerate(methods):
            if m not in agg["per_dataset"][ds]:
                raise ValueError(f"method {m!r} has no records on dataset {ds!r}")
            table[i, j] = agg["per_dataset"][ds][m][metric]["mean"]
    return stats.ScoreTable(methods=methods, datasets=datasets, scores=table)


def stats_report(records: list[dict], metric: str, alpha: float = stats.HOLM_ALPHA) -> dict:
    """Friedman + pairwise Wilcoxon/Holm + CD diagram for one metric."""
    table = score_table(records, metric)
    ranks = stats.mean_ranks(table, higher_is_better=True)
    friedman = stats.friedman_test(ranks)
    pairwise = stats.pairwise_wilcoxon_holm(table, alpha=alpha)
    svg = stats.cd_diagram_svg(ranks, pairwise)
    return {
        "v": RECORD_VERSION,
        "metric": metric,
        "alpha": alpha,
        "methods": table.methods,
        "datasets": table.datasets,
        "mean_ranks": {m: float(r) for m, r in zip(ranks.methods, ranks.mean_ranks)},
        "friedman": {
            "statistic": friedman.statistic,
            "p_value": friedman.p_value,
            "k": friedman.k,
            "n": friedman.n,
        },
        "pairwise": [
            {
                "method_a": p.method_a,
                "method_b": p.method_b,
                "p_value": p.p_value,
                "significant": p.significant,
                "w_statistic": p.w_statistic,
                "degenerate": p.degenerate,
            }
            for p in pairwise
        ],
        "svg": svg,
    }
