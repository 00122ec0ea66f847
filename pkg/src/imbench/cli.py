"""Command-line interface: inspect, tune, run, aggregate, stats."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, metrics


def _cmd_inspect(args) -> int:
    dataset = harness.load_dataset(args.data)
    profile = harness.data.profile_dataset(dataset, max_n=args.max_n, seed=args.seed)
    print(f"dataset:           {profile.name}")
    print(f"samples:           {profile.n_samples}")
    print(f"features:          {profile.n_features}")
    print(f"majority %:        {profile.percent_majority:.2f}")
    print(f"minority %:        {profile.percent_minority:.2f}")
    print(f"imbalance ratio:   {profile.imbalance_ratio:.2f}")
    print(f"silhouette coeff:  {profile.silhouette:.3f}")
    print(json.dumps(profile.to_dict(), sort_keys=True))
    return 0


def _cmd_tune(args) -> int:
    if args.config:
        config = harness.ExperimentConfig.from_json_file(args.config)
    else:
        config = harness.ExperimentConfig(datasets=[args.data])
    dataset = harness.load_dataset(args.data)
    report = harness.tune_architecture(dataset, config)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_run(args) -> int:
    config = harness.ExperimentConfig.from_json_file(args.config)
    summary = harness.run_experiment(config, progress=print if args.verbose else None)
    print(f"records file:   {summary.records_path}")
    print(f"jobs total:     {summary.n_jobs}")
    print(f"jobs skipped:   {summary.n_skipped} (already recorded)")
    print(f"jobs executed:  {summary.n_completed}")
    print(f"jobs failed:    {summary.n_failed}")
    for name, depth in summary.depths.items():
        print(f"depth[{name}] = {depth}")
    return 1 if summary.n_failed else 0


def _cmd_aggregate(args) -> int:
    records = harness.load_records(args.records)
    report = harness.aggregate(records)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_stats(args) -> int:
    records = harness.load_records(args.records)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = harness.stats_report(records, metric=args.metric, alpha=args.alpha)
    svg = report.pop("svg")
    svg_path = out_dir / f"cd_{args.metric}.svg"
    json_path = out_dir / f"stats_{args.metric}.json"
    svg_path.write_text(svg + "\n", encoding="utf-8")
    json_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"friedman statistic = {report['friedman']['statistic']:.4f}, "
          f"p = {report['friedman']['p_value']:.6g}")
    for pair in report["pairwise"]:
        flag = "significant" if pair["significant"] else "n.s."
        print(f"{pair['method_a']} vs {pair['method_b']}: p = {pair['p_value']:.6g} [{flag}]")
    print(f"wrote {json_path}")
    print(f"wrote {svg_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imbench",
        description="Benchmark harness for deep imbalanced binary classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_inspect = sub.add_parser("inspect", help="profile a dataset file")
    p_inspect.add_argument("data", help="path to a KEEL .dat or CSV file")
    p_inspect.add_argument("--max-n", type=int, default=5000,
                           help="silhouette subsample cap (default 5000)")
    p_inspect.add_argument("--seed", type=int, default=0, help="subsample seed")
    p_inspect.set_defaults(func=_cmd_inspect)

    p_tune = sub.add_parser("tune", help="select network depth by 5-fold ROC-AUC")
    p_tune.add_argument("data", help="path to a dataset file")
    p_tune.add_argument("--config", help="JSON experiment config (optional)")
    p_tune.set_defaults(func=_cmd_tune)

    p_run = sub.add_parser("run", help="run the benchmark matrix")
    p_run.add_argument("--config", required=True, help="JSON experiment config")
    p_run.add_argument("--verbose", action="store_true", help="per-job progress")
    p_run.set_defaults(func=_cmd_run)

    p_agg = sub.add_parser("aggregate", help="summarize a records file")
    p_agg.add_argument("--records", required=True, help="records.jsonl path")
    p_agg.add_argument("--out", help="write JSON here instead of stdout")
    p_agg.set_defaults(func=_cmd_aggregate)

    p_stats = sub.add_parser("stats", help="Friedman/Wilcoxon/Holm report + CD diagram")
    p_stats.add_argument("--records", required=True, help="records.jsonl path")
    p_stats.add_argument("--metric", default="g_mean", choices=metrics.METRIC_NAMES,
                         help="metric to compare on (default g_mean)")
    p_stats.add_argument("--out", required=True, help="output directory")
    p_stats.add_argument("--alpha", type=float, default=0.05,
                         help="family-wise significance level (default 0.05)")
    p_stats.set_defaults(func=_cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
