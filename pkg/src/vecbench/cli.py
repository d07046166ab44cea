"""Command-line entry point.

Subcommands: generate, groundtruth, run, pareto, difficulty, oodgap,
report. Every command is a thin wrapper over the library operations and is
deterministic given identical inputs and seeds (timing fields excepted).
On failure the process exits nonzero after printing a single
``error:<category>: <message>`` line to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import datasets, metrics, report
from .datasets import FileFormatError
from .oracle import build_ground_truth
from .runner import (
    GridConfig,
    expand_grid,
    ood_gap,
    read_records,
    relative_throughput,
    run_benchmark,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vecbench",
        description="Benchmark harness for approximate nearest neighbor search",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a synthetic dataset")
    gen_sub = gen.add_subparsers(dest="kind", required=True)

    def common_gen(p):
        p.add_argument("--n", type=int, required=True, help="corpus size")
        p.add_argument("--d", type=int, required=True, help="dimension")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output dataset directory")
        p.add_argument("--force", action="store_true")
        p.add_argument("--name", default=None)

    g1 = gen_sub.add_parser("id-gaussian", help="in-distribution Gaussian mixture")
    common_gen(g1)
    g1.add_argument("--clusters", type=int, default=16)
    g1.add_argument("--spread", type=float, default=1.0)
    g1.add_argument("--separation", type=float, default=4.0)
    g1.add_argument("--queries", type=int, default=datasets.DEFAULT_TEST_QUERIES)
    g1.add_argument(
        "--raw", action="store_true", help="skip unit normalization of rows"
    )

    g2 = gen_sub.add_parser("ood-shifted", help="OOD queries with displaced means")
    common_gen(g2)
    g2.add_argument("--shift", type=float, required=True)
    g2.add_argument("--clusters", type=int, default=16)
    g2.add_argument("--spread", type=float, default=1.0)
    g2.add_argument("--separation", type=float, default=4.0)
    g2.add_argument("--normalized", action="store_true")
    g2.add_argument("--test-queries", type=int, default=datasets.DEFAULT_TEST_QUERIES)
    g2.add_argument(
        "--train-queries", type=int, default=datasets.DEFAULT_TRAIN_QUERIES
    )

    g3 = gen_sub.add_parser("ood-mips", help="inner-product attention-style workload")
    common_gen(g3)
    g3.add_argument("--query-mean-norm", type=float, required=True)
    g3.add_argument("--test-queries", type=int, default=datasets.DEFAULT_TEST_QUERIES)
    g3.add_argument(
        "--train-queries", type=int, default=datasets.DEFAULT_TRAIN_QUERIES
    )

    gt = sub.add_parser("groundtruth", help="compute exact ground truth files")
    gt.add_argument("--dataset", required=True)
    gt.add_argument("--k", type=int, default=100)

    run = sub.add_parser("run", help="run a benchmark grid against a dataset")
    run.add_argument("--dataset", required=True)
    run.add_argument("--config", required=True, help="JSON grid config")
    run.add_argument("--out", required=True, help="JSONL records file (appended)")
    run.add_argument("--k", type=int, default=None, help="override config k")
    run.add_argument("--seed", type=int, default=None, help="override config seed")
    run.add_argument("--force", action="store_true", help="re-run completed configs")

    par = sub.add_parser("pareto", help="print recall/QPS Pareto frontiers")
    par.add_argument("--records", required=True)
    par.add_argument("--threshold", type=float, default=None)
    par.add_argument("--out", default=None, help="write CSV here instead of stdout")

    diff = sub.add_parser("difficulty", help="relative-contrast profile of a dataset")
    diff.add_argument("--dataset", required=True)
    diff.add_argument("--k", type=int, default=100)
    diff.add_argument("--split-size", type=int, default=100)
    diff.add_argument("--out", default=None, help="write CSV here instead of stdout")

    gap = sub.add_parser("oodgap", help="ID vs OOD operating-point throughput")
    gap.add_argument("--id-records", required=True)
    gap.add_argument("--ood-records", required=True)
    gap.add_argument("--threshold", type=float, default=0.95)
    gap.add_argument("--out", default=None)

    rep = sub.add_parser("report", help="emit CSV tables and a static HTML report")
    rep.add_argument("--records", required=True, nargs="+")
    rep.add_argument(
        "--threshold",
        type=float,
        action="append",
        default=None,
        help="operating-point threshold (repeatable; default 0.95 and 0.9)",
    )
    rep.add_argument("--out", required=True, help="output directory")
    rep.add_argument("--difficulty", nargs="*", default=[], help="difficulty CSVs")
    rep.add_argument("--oodgap", nargs="*", default=[], help="oodgap CSVs")
    return parser


def _cmd_generate(args) -> int:
    if args.kind == "id-gaussian":
        ds = datasets.generate_id_gaussian(
            n=args.n,
            d=args.d,
            clusters=args.clusters,
            spread=args.spread,
            separation=args.separation,
            seed=args.seed,
            normalized=not args.raw,
            n_queries=args.queries,
            name=args.name,
        )
    elif args.kind == "ood-shifted":
        ds = datasets.generate_ood_shifted(
            n=args.n,
            d=args.d,
            shift=args.shift,
            seed=args.seed,
            clusters=args.clusters,
            spread=args.spread,
            separation=args.separation,
            normalized=args.normalized,
            n_test=args.test_queries,
            n_train=args.train_queries,
            name=args.name,
        )
    else:
        ds = datasets.generate_ood_mips(
            n=args.n,
            d=args.d,
            query_mean_norm=args.query_mean_norm,
            seed=args.seed,
            n_test=args.test_queries,
            n_train=args.train_queries,
            name=args.name,
        )
    datasets.write_dataset(ds, args.out, force=args.force)
    print(f"wrote dataset {ds.name} ({ds.n}x{ds.d}) to {args.out}")
    return 0


def _cmd_groundtruth(args) -> int:
    ds = datasets.read_dataset(args.dataset)
    test_gt, train_gt = build_ground_truth(ds, args.k, out_dir=args.dataset)
    print(f"wrote {datasets.gt_path(args.dataset, args.k)} ({test_gt.q} queries)")
    if train_gt is not None:
        print(
            f"wrote {datasets.train_gt_path(args.dataset, args.k)} "
            f"({train_gt.q} queries)"
        )
    return 0


def _cmd_run(args) -> int:
    ds = datasets.read_dataset(args.dataset)
    config = GridConfig.from_json_file(args.config)
    k = config.k if args.k is None else args.k
    seed = config.seed if args.seed is None else args.seed
    gt_file = datasets.gt_path(args.dataset, k)
    if not gt_file.exists():
        raise FileNotFoundError(
            f"{gt_file} missing; run `vecbench groundtruth --dataset {args.dataset} "
            f"--k {k}` first"
        )
    gt = datasets.read_ground_truth(gt_file)
    records = run_benchmark(
        ds,
        gt,
        expand_grid(config),
        k=k,
        seed=seed,
        out_path=args.out,
        force=args.force,
        log=print,
    )
    print(f"appended {len(records)} records to {args.out}")
    return 0


def _write_rows(rows, out):
    if out is None:
        writer = csv.writer(sys.stdout)
        for row in rows:
            writer.writerow(row)
    else:
        with open(out, "w", newline="") as f:
            writer = csv.writer(f)
            for row in rows:
                writer.writerow(row)


def _cmd_pareto(args) -> int:
    records = read_records(args.records)
    bundle = report.build_bundle(
        records, thresholds=() if args.threshold is None else (args.threshold,)
    )
    rows = [["dataset", "family", "mean_recall", "qps", "build_params", "query_params"]]
    for dataset in sorted(bundle.frontiers):
        for family in sorted(bundle.frontiers[dataset]):
            for point in bundle.frontiers[dataset][family]:
                rows.append(
                    [
                        dataset,
                        family,
                        repr(point.mean_recall),
                        repr(point.qps),
                        json.dumps(point.config.build_params, sort_keys=True),
                        json.dumps(point.config.query_params, sort_keys=True),
                    ]
                )
    if args.threshold is not None:
        rows.append([])
        rows.append(["dataset", "family", f"relative_qps@{args.threshold}"])
        for dataset, recs in _group_by_dataset(records).items():
            for family, ratio in sorted(
                relative_throughput(recs, args.threshold).items()
            ):
                rows.append(
                    [dataset, family, "absent" if ratio is None else repr(ratio)]
                )
    _write_rows(rows, args.out)
    return 0


def _group_by_dataset(records):
    grouped = {}
    for record in records:
        grouped.setdefault(record.dataset, []).append(record)
    return grouped


def _cmd_difficulty(args) -> int:
    ds = datasets.read_dataset(args.dataset)
    profile = metrics.contrast_profile(ds.corpus, ds.test_queries, args.k, ds.measure)
    if args.out is None:
        out = sys.stdout
        metrics_rows = _contrast_rows(profile, args.split_size)
        writer = csv.writer(out)
        for row in metrics_rows:
            writer.writerow(row)
    else:
        metrics.write_contrast_csv(profile, args.out, m=args.split_size)
        print(f"wrote {args.out}")
    return 0


def _contrast_rows(profile, m):
    split = np.full(profile.rc.shape[0], "mid", dtype=object)
    split[~profile.defined] = "undefined"
    if int(profile.defined.sum()) >= 2 * m:
        hardest, easiest = metrics.difficulty_split(profile, m)
        split[hardest] = "hardest"
        split[easiest] = "easiest"
    rows = [["query_id", "rc", "split"]]
    for i, (value, tag) in enumerate(zip(profile.rc, split)):
        rows.append([i, "" if np.isnan(value) else repr(float(value)), tag])
    return rows


def _cmd_oodgap(args) -> int:
    records_id = read_records(args.id_records)
    records_ood = read_records(args.ood_records)
    entries = ood_gap(records_id, records_ood, args.threshold)
    rows = [["family", "qps_id", "qps_ood", "ratio"]]
    for family, entry in entries.items():
        rows.append(
            [
                family,
                "absent" if entry.qps_id is None else repr(entry.qps_id),
                "absent" if entry.qps_ood is None else repr(entry.qps_ood),
                "absent" if entry.ratio is None else repr(entry.ratio),
            ]
        )
    _write_rows(rows, args.out)
    return 0


def _read_csv_rows(path):
    with open(path, newline="") as f:
        return [row for row in csv.reader(f)]


def _cmd_report(args) -> int:
    records = []
    for path in args.records:
        records.extend(read_records(path))
    thresholds = args.threshold if args.threshold else [0.95, 0.9]
    extra = {"difficulty": {}, "oodgap": {}}
    for path in args.difficulty:
        extra["difficulty"][Path(path).stem] = _read_csv_rows(path)
    for path in args.oodgap:
        extra["oodgap"][Path(path).stem] = _read_csv_rows(path)
    html_path = report.write_report(
        records, args.out, thresholds=tuple(thresholds), extra_tables=extra
    )
    print(f"wrote {html_path}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "groundtruth": _cmd_groundtruth,
    "run": _cmd_run,
    "pareto": _cmd_pareto,
    "difficulty": _cmd_difficulty,
    "oodgap": _cmd_oodgap,
    "report": _cmd_report,
}


def _error_category(exc: Exception) -> str:
    if isinstance(exc, FileFormatError):
        return "format"
    if isinstance(exc, FileExistsError):
        return "exists"
    if isinstance(exc, FileNotFoundError):
        return "io"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, KeyError):
        return "config"
    if isinstance(exc, ValueError):
        return "invalid"
    return "internal"


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # one-line, machine-parsable failure
        print(f"error:{_error_category(exc)}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
