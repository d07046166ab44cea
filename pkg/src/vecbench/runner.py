"""Hyperparameter grid expansion, timed benchmark runs, and persistence.

The protocol: each (family, build params) pair is constructed once, timed,
single-threaded; every query configuration then gets one untimed warmup
pass over min(100, q) queries followed by one timed pass in which each test
query executes alone on the calling thread under a monotonic clock. Records
append to a JSONL file as they complete, and already-recorded
(dataset, family, build, query, k) tuples are skipped on rerun unless
forced.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .core import BitMatrix
from .indexes import FAMILIES, build_index
from .metrics import ParetoPoint, operating_point, qps as compute_qps, recall

SCHEMA_VERSION = 1
HARNESS_VERSION = "0.1.0"
WARMUP_QUERIES = 100


@dataclass
class FamilyGrid:
    build: list  # list of build-param dicts
    query: list  # list of query-param dicts


@dataclass
class GridConfig:
    """Dataset-independent hyperparameter grids; one grid serves all datasets."""

    algorithms: dict  # family -> FamilyGrid
    k: int = 100
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict) -> "GridConfig":
        known = {"algorithms", "k", "seed"}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        algorithms = {}
        raw_algos = raw.get("algorithms")
        if not isinstance(raw_algos, dict) or not raw_algos:
            raise ValueError("config must define a nonempty 'algorithms' mapping")
        for family, grids in raw_algos.items():
            if family not in FAMILIES:
                raise ValueError(f"unknown index family in config: {family!r}")
            if not isinstance(grids, dict):
                raise ValueError(f"{family}: grids must be an object")
            extra = set(grids) - {"build", "query"}
            if extra:
                raise ValueError(f"{family}: unknown grid keys {sorted(extra)}")
            build = grids.get("build", [{}])
            query = grids.get("query")
            if not isinstance(build, list) or not build:
                raise ValueError(f"{family}: build grid must be a nonempty list")
            if not isinstance(query, list) or not query:
                raise ValueError(f"{family}: query grid must be a nonempty list")
            for entry in (*build, *query):
                if not isinstance(entry, dict):
                    raise ValueError(f"{family}: grid entries must be objects")
            algorithms[family] = FamilyGrid(
                build=[dict(b) for b in build], query=[dict(q) for q in query]
            )
        return cls(
            algorithms=algorithms, k=int(raw.get("k", 100)), seed=int(raw.get("seed", 0))
        )

    @classmethod
    def from_json_file(cls, path) -> "GridConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class RunSpec:
    family: str
    build_params: dict
    query_params: dict


def expand_grid(config: GridConfig) -> list:
    """Cartesian product per family: build params outer, query params inner.

    The ordering is stable and groups query configs under their build, so
    the runner constructs each index exactly once.
    """
    runs = []
    for family, grid in config.algorithms.items():
        for build_params in grid.build:
            for query_params in grid.query:
                runs.append(
                    RunSpec(
                        family=family,
                        build_params=dict(build_params),
                        query_params=dict(query_params),
                    )
                )
    return runs


@dataclass
class BenchmarkRecord:
    """One (dataset, family, build params, query params) measurement."""

    dataset: str
    family: str
    build_params: dict
    query_params: dict
    k: int
    build_seconds: float
    latencies: list
    recalls: list
    mean_recall: float
    qps: float
    timestamp: str
    status: str = "ok"
    error: str = None
    schema_version: int = SCHEMA_VERSION
    harness_version: str = HARNESS_VERSION

    def key(self) -> tuple:
        return (
            self.dataset,
            self.family,
            json.dumps(self.build_params, sort_keys=True),
            json.dumps(self.query_params, sort_keys=True),
            self.k,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict) -> "BenchmarkRecord":
        if raw.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(
                f"unsupported record schema_version {raw.get('schema_version')}"
            )
        return cls(**raw)


def write_records(records, path, append: bool = True) -> None:
    mode = "a" if append else "w"
    with open(path, mode) as f:
        for record in records:
            f.write(record.to_json())
            f.write("\n")


def read_records(path) -> list:
    path = Path(path)
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(BenchmarkRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad record ({exc})") from exc
    return records


def _query_rows(queries):
    if isinstance(queries, BitMatrix):
        return [queries.row(i) for i in range(queries.n)]
    return list(np.asarray(queries, dtype=np.float32))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def run_benchmark(
    dataset,
    ground_truth,
    runs,
    k: int = 100,
    seed: int = 0,
    out_path=None,
    force: bool = False,
    log=None,
) -> list:
    """Execute run specs against a dataset; returns the new records.

    ``ground_truth`` must cover the dataset's test queries at this k.
    Completed (dataset, family, params, k) tuples already present in
    ``out_path`` are skipped unless ``force``.
    """
    if ground_truth.k != k:
        raise ValueError(f"ground truth has k={ground_truth.k}, run wants k={k}")
    done = set()
    if out_path is not None and Path(out_path).exists() and not force:
        done = {record.key() for record in read_records(out_path)}
    rows = _query_rows(dataset.test_queries)
    nq = len(rows)
    say = log or (lambda message: None)

    new_records = []

    def emit(record):
        new_records.append(record)
        if out_path is not None:
            write_records([record], out_path, append=True)

    current_build_key = None
    index = None
    build_seconds = 0.0
    build_error = None
    for spec in runs:
        if spec.family not in FAMILIES:
            raise ValueError(f"unknown index family: {spec.family!r}")
        record_key = (
            dataset.name,
            spec.family,
            json.dumps(spec.build_params, sort_keys=True),
            json.dumps(spec.query_params, sort_keys=True),
            k,
        )
        if record_key in done:
            say(f"skip {spec.family} {spec.build_params} {spec.query_params} (done)")
            continue
        build_key = (spec.family, json.dumps(spec.build_params, sort_keys=True))
        if build_key != current_build_key:
            current_build_key = build_key
            index = None
            build_error = None
            say(f"build {spec.family} {spec.build_params}")
            start = time.perf_counter()
            try:
                index = build_index(
                    spec.family,
                    dataset.corpus,
                    dataset.measure,
                    spec.build_params,
                    seed,
                    train_queries=dataset.train_queries,
                )
            except Exception as exc:  # record the failure, keep running
                build_error = f"{type(exc).__name__}: {exc}"
            build_seconds = time.perf_counter() - start
        if build_error is not None:
            emit(
                BenchmarkRecord(
                    dataset=dataset.name,
                    family=spec.family,
                    build_params=spec.build_params,
                    query_params=spec.query_params,
                    k=k,
                    build_seconds=build_seconds,
                    latencies=[],
                    recalls=[],
                    mean_recall=0.0,
                    qps=0.0,
                    timestamp=_now(),
                    status="build_failed",
                    error=build_error,
                )
            )
            continue

        for i in range(min(WARMUP_QUERIES, nq)):
            index.search(rows[i], k, spec.query_params)
        latencies = np.empty(nq, dtype=np.float64)
        results = []
        for i, row in enumerate(rows):
            start = time.perf_counter()
            result = index.search(row, k, spec.query_params)
            latencies[i] = time.perf_counter() - start
            results.append(result)
        recalls = [
            recall(res.ids, res.dists, float(ground_truth.thresholds[i]), k)
            for i, res in enumerate(results)
        ]
        record = BenchmarkRecord(
            dataset=dataset.name,
            family=spec.family,
            build_params=spec.build_params,
            query_params=spec.query_params,
            k=k,
            build_seconds=build_seconds,
            latencies=latencies.tolist(),
            recalls=recalls,
            mean_recall=float(np.mean(np.asarray(recalls, dtype=np.float64))),
            qps=compute_qps(latencies),
            timestamp=_now(),
        )
        say(
            f"  {spec.family} {spec.query_params}: recall {record.mean_recall:.4f} "
            f"qps {record.qps:.1f}"
        )
        emit(record)
    return new_records


def records_to_points(records) -> dict:
    """Group ok-status records into ParetoPoints per family."""
    by_family = {}
    for record in records:
        if record.status != "ok":
            continue
        by_family.setdefault(record.family, []).append(
            ParetoPoint(record.mean_recall, record.qps, record)
        )
    return by_family


def _single_dataset(records) -> str:
    names = {record.dataset for record in records}
    if len(names) != 1:
        raise ValueError(f"records must cover one dataset, found {sorted(names)}")
    return names.pop()


def relative_throughput(records, recall_threshold: float) -> dict:
    """Per-family operating-point QPS relative to the best family.

    Families that do not reach the threshold map to None.
    """
    _single_dataset(records)
    best = {}
    for family, points in records_to_points(records).items():
        op = operating_point(points, recall_threshold)
        best[family] = None if op is None else op.qps
    reached = [value for value in best.values() if value is not None]
    if not reached:
        raise ValueError(f"no family reaches recall {recall_threshold}")
    top = max(reached)
    return {
        family: (None if value is None else value / top)
        for family, value in best.items()
    }


@dataclass
class OodGapEntry:
    """Operating-point QPS on in- vs out-of-distribution queries."""

    qps_id: float = None
    qps_ood: float = None

    @property
    def ratio(self):
        if self.qps_id is None or self.qps_ood is None:
            return None
        return self.qps_ood / self.qps_id


def ood_gap(records_id, records_ood, recall_threshold: float) -> dict:
    """Per-family QPS gap between ID and OOD query sets over the same corpus."""
    points_id = records_to_points(records_id)
    points_ood = records_to_points(records_ood)
    entries = {}
    for family in sorted(set(points_id) | set(points_ood)):
        entry = OodGapEntry()
        if family in points_id:
            op = operating_point(points_id[family], recall_threshold)
            entry.qps_id = None if op is None else op.qps
        if family in points_ood:
            op = operating_point(points_ood[family], recall_threshold)
            entry.qps_ood = None if op is None else op.qps
        entries[family] = entry
    return entries
