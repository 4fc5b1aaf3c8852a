import csv
import json
from pathlib import Path
from typing import Dict, Any

from src.core.models import MetricsReport

ETHUCY_ORDER = ("eth", "hotel", "univ", "zara1", "zara2")


def export_report_json(report: MetricsReport, path: Path):
    with open(path, 'w') as f:
        json.dump(report.model_dump(), f, indent=2)


def _ordered_scenes(report: MetricsReport):
    known = [s for s in ETHUCY_ORDER if s in report.scenes]
    rest = sorted(s for s in report.scenes if s not in ETHUCY_ORDER)
    return known + rest


def format_report_table(report: MetricsReport, decimals: int = 2) -> str:
    """
    One row of ADE/FDE cells, scenes as columns plus AVG
    (e.g. `0.10/0.15`). SDD reports collapse to the single AVG cell.
    """
    scenes = [] if report.dataset == "sdd" else _ordered_scenes(report)
    columns = scenes + ["AVG"]
    cells = [f"{report.scenes[s].ade:.{decimals}f}/{report.scenes[s].fde:.{decimals}f}" for s in scenes]
    cells.append(f"{report.average_ade:.{decimals}f}/{report.average_fde:.{decimals}f}")
    width = max(max(len(c) for c in cells), max(len(c) for c in columns)) + 2
    title = f"{report.dataset} ADE_{report.k}/FDE_{report.k} ({report.unit}{', joint min' if report.joint_min else ''})"
    lines = [
        title,
        "".join(c.upper().rjust(width) for c in columns),
        "".join(c.rjust(width) for c in cells),
        f"samples: {report.sample_count}",
    ]
    if report.param_count is not None:
        lines.append(f"params: {report.param_count / 1e6:.3f} M")
    if report.flop_estimate is not None:
        lines.append(f"FLOPs: {report.flop_estimate / 1e6:.3f} M")
    return "\n".join(lines)


def export_report_csv(report: MetricsReport, path: Path):
    rows = [["Scene", "ADE", "FDE", "Samples"]]
    for scene in _ordered_scenes(report):
        m = report.scenes[scene]
        rows.append([scene, m.ade, m.fde, m.samples])
    rows.append(["AVG", report.average_ade, report.average_fde, report.sample_count])
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerows(rows)


def format_leave_one_out_table(summary: Dict[str, Any], decimals: int = 2) -> str:
    runs = summary["runs"]
    columns = [s for s in ETHUCY_ORDER if s in runs] + ["AVG"]
    cells = [f"{runs[s]['ade']:.{decimals}f}/{runs[s]['fde']:.{decimals}f}" for s in columns[:-1]]
    avg = summary["average"]
    cells.append(f"{avg['ade']:.{decimals}f}/{avg['fde']:.{decimals}f}")
    width = max(len(c) for c in cells + columns) + 2
    return "\n".join([
        "".join(c.upper().rjust(width) for c in columns),
        "".join(c.rjust(width) for c in cells),
    ])
