"""Static benchmark report: CSV tables plus one self-contained HTML file.

The HTML embeds hand-rolled SVG scatter plots (recall on x, QPS on a log
scale on y, one series per family) so the report needs no plotting
dependency and no network. Every number is recomputable from the JSONL
records the report was built from.
"""

from __future__ import annotations

import csv
import html
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .metrics import operating_point, pareto_frontier
from .runner import records_to_points

_PALETTE = [
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#17becf",
]


@dataclass
class ReportBundle:
    """Everything the static report renders, keyed by dataset name."""

    frontiers: dict  # dataset -> family -> list[ParetoPoint]
    operating_points: dict  # dataset -> threshold -> family -> ParetoPoint | None
    relative: dict  # dataset -> threshold -> family -> float | None
    thresholds: list
    difficulty_tables: dict = field(default_factory=dict)  # label -> rows
    oodgap_tables: dict = field(default_factory=dict)  # label -> rows


def _by_dataset(records) -> dict:
    grouped = {}
    for record in records:
        grouped.setdefault(record.dataset, []).append(record)
    return grouped


def build_bundle(records, thresholds=(0.95, 0.9)) -> ReportBundle:
    frontiers = {}
    ops = {}
    relative = {}
    for dataset, recs in _by_dataset(records).items():
        by_family = records_to_points(recs)
        frontiers[dataset] = {
            family: pareto_frontier(points) for family, points in by_family.items()
        }
        ops[dataset] = {}
        relative[dataset] = {}
        for threshold in thresholds:
            ops[dataset][threshold] = {
                family: operating_point(points, threshold)
                for family, points in by_family.items()
            }
            reached = [
                op.qps for op in ops[dataset][threshold].values() if op is not None
            ]
            top = max(reached) if reached else None
            relative[dataset][threshold] = {
                family: (None if op is None or top is None else op.qps / top)
                for family, op in ops[dataset][threshold].items()
            }
    return ReportBundle(
        frontiers=frontiers,
        operating_points=ops,
        relative=relative,
        thresholds=list(thresholds),
    )


def write_frontier_csv(bundle: ReportBundle, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["dataset", "family", "mean_recall", "qps", "build_params", "query_params"]
        )
        for dataset in sorted(bundle.frontiers):
            for family in sorted(bundle.frontiers[dataset]):
                for point in bundle.frontiers[dataset][family]:
                    record = point.config
                    writer.writerow(
                        [
                            dataset,
                            family,
                            repr(point.mean_recall),
                            repr(point.qps),
                            json.dumps(record.build_params, sort_keys=True),
                            json.dumps(record.query_params, sort_keys=True),
                        ]
                    )


def write_operating_csv(bundle: ReportBundle, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            [
                "dataset",
                "threshold",
                "family",
                "mean_recall",
                "qps",
                "relative_qps",
                "build_params",
                "query_params",
            ]
        )
        for dataset in sorted(bundle.operating_points):
            for threshold in bundle.thresholds:
                for family in sorted(bundle.operating_points[dataset][threshold]):
                    op = bundle.operating_points[dataset][threshold][family]
                    rel = bundle.relative[dataset][threshold][family]
                    if op is None:
                        writer.writerow(
                            [dataset, threshold, family, "", "", "absent", "", ""]
                        )
                    else:
                        record = op.config
                        writer.writerow(
                            [
                                dataset,
                                threshold,
                                family,
                                repr(op.mean_recall),
                                repr(op.qps),
                                repr(rel),
                                json.dumps(record.build_params, sort_keys=True),
                                json.dumps(record.query_params, sort_keys=True),
                            ]
                        )


def _svg_scatter(frontier_by_family: dict, width=640, height=420) -> str:
    """Recall/QPS scatter: one polyline+markers series per family."""
    margin_l, margin_r, margin_t, margin_b = 60, 160, 20, 45
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    all_points = [p for pts in frontier_by_family.values() for p in pts]
    if not all_points:
        return "<svg/>"
    qps_values = [p.qps for p in all_points if p.qps > 0]
    lo = math.floor(math.log10(min(qps_values)))
    hi = math.ceil(math.log10(max(qps_values)))
    if hi == lo:
        hi += 1

    def x_of(recall):
        return margin_l + recall * plot_w

    def y_of(qps):
        frac = (math.log10(qps) - lo) / (hi - lo)
        return margin_t + (1.0 - frac) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#999"/>',
    ]
    for i in range(11):
        recall = i / 10
        x = x_of(recall)
        parts.append(
            f'<line x1="{x:.1f}" y1="{margin_t + plot_h}" x2="{x:.1f}" '
            f'y2="{margin_t + plot_h + 4}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{margin_t + plot_h + 16}" '
            f'text-anchor="middle">{recall:.1f}</text>'
        )
    for e in range(lo, hi + 1):
        y = y_of(10.0**e)
        parts.append(
            f'<line x1="{margin_l - 4}" y1="{y:.1f}" x2="{margin_l}" y2="{y:.1f}" '
            f'stroke="#333"/>'
        )
        parts.append(
            f'<text x="{margin_l - 8}" y="{y + 4:.1f}" text-anchor="end">1e{e}</text>'
        )
    parts.append(
        f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 8}" '
        f'text-anchor="middle">mean recall@k</text>'
    )
    parts.append(
        f'<text x="14" y="{margin_t + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {margin_t + plot_h / 2:.1f})">QPS (log)</text>'
    )
    for idx, family in enumerate(sorted(frontier_by_family)):
        color = _PALETTE[idx % len(_PALETTE)]
        points = [p for p in frontier_by_family[family] if p.qps > 0]
        coords = [(x_of(p.mean_recall), y_of(p.qps)) for p in points]
        if len(coords) > 1:
            path = " ".join(f"{x:.1f},{y:.1f}" for x, y in coords)
            parts.append(
                f'<polyline points="{path}" fill="none" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
        for x, y in coords:
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="{color}"/>')
        ly = margin_t + 14 + idx * 16
        lx = margin_l + plot_w + 12
        parts.append(f'<circle cx="{lx}" cy="{ly - 4}" r="4" fill="{color}"/>')
        parts.append(
            f'<text x="{lx + 10}" y="{ly}">{html.escape(family)}</text>'
        )
    parts.append("</svg>")
    return "".join(parts)


def _html_table(headers, rows) -> str:
    out = ["<table><tr>"]
    out.extend(f"<th>{html.escape(str(h))}</th>" for h in headers)
    out.append("</tr>")
    for row in rows:
        out.append("<tr>")
        out.extend(f"<td>{html.escape(str(cell))}</td>" for cell in row)
        out.append("</tr>")
    out.append("</table>")
    return "".join(out)


def render_html(bundle: ReportBundle) -> str:
    parts = [
        "<!DOCTYPE html><html><head><meta charset='utf-8'>",
        "<title>ANN benchmark report</title>",
        "<style>body{font-family:sans-serif;margin:24px;} table{border-collapse:"
        "collapse;margin:12px 0;} td,th{border:1px solid #bbb;padding:4px 8px;"
        "font-size:13px;} h2{margin-top:32px;}</style></head><body>",
        "<h1>ANN benchmark report</h1>",
    ]
    for dataset in sorted(bundle.frontiers):
        parts.append(f"<h2>{html.escape(dataset)}</h2>")
        parts.append(_svg_scatter(bundle.frontiers[dataset]))
        for threshold in bundle.thresholds:
            rows = []
            for family in sorted(bundle.operating_points[dataset][threshold]):
                op = bundle.operating_points[dataset][threshold][family]
                rel = bundle.relative[dataset][threshold][family]
                if op is None:
                    rows.append([family, "absent", "", "", ""])
                else:
                    rows.append(
                        [
                            family,
                            f"{op.mean_recall:.4f}",
                            f"{op.qps:.1f}",
                            f"{rel:.3f}" if rel is not None else "",
                            json.dumps(op.config.query_params, sort_keys=True),
                        ]
                    )
            parts.append(f"<h3>Operating points at recall ≥ {threshold}</h3>")
            parts.append(
                _html_table(
                    ["family", "mean recall", "QPS", "relative QPS", "query params"],
                    rows,
                )
            )
    for label, rows in bundle.difficulty_tables.items():
        parts.append(f"<h2>Difficulty split: {html.escape(label)}</h2>")
        parts.append(_html_table(rows[0], rows[1:]))
    for label, rows in bundle.oodgap_tables.items():
        parts.append(f"<h2>OOD gap: {html.escape(label)}</h2>")
        parts.append(_html_table(rows[0], rows[1:]))
    parts.append("</body></html>")
    return "".join(parts)


def write_report(records, out_dir, thresholds=(0.95, 0.9), extra_tables=None) -> Path:
    """Emit frontier/operating CSVs and report.html into ``out_dir``.

    ``extra_tables`` maps section kind ("difficulty" or "oodgap") to
    {label: rows} where rows[0] is the header row.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = build_bundle(records, thresholds)
    if extra_tables:
        bundle.difficulty_tables = extra_tables.get("difficulty", {})
        bundle.oodgap_tables = extra_tables.get("oodgap", {})
    write_frontier_csv(bundle, out_dir / "frontier.csv")
    write_operating_csv(bundle, out_dir / "operating_points.csv")
    html_path = out_dir / "report.html"
    html_path.write_text(render_html(bundle))
    return html_path
