"""CSV and manifest output for experiment results.

Two tiers are written. ``raw/`` and ``summary.csv``, ``differences.csv``,
``replications.csv`` carry full precision (17 significant digits) and parse
back to the in-memory aggregates exactly. ``costs_<scenario>.csv`` and
``events_<scenario>.csv`` are display tables in the layout of the published
cost tables (million PLN) and yearly event counts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import __version__
from .engine import COST_METRICS, METRICS, ExperimentResult
from .stats import SampleSummary, mean_ci, welch_t_test

TOTAL = "TOTAL"
DISPLAY_COSTS = COST_METRICS + ("total_cost",)
DISPLAY_EVENTS = ("cancer_deaths", "diagnoses")
MILLION = 1e6


@dataclass(frozen=True)
class ReportRow:
    year: str
    metric: str
    scenario: str
    mean: float
    ci_low: float
    ci_high: float


def _fmt(x: float) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if math.isnan(x):
        return "nan"
    return format(float(x), ".17g")


def summarize(samples: Sequence[float], level: float = 0.95) -> SampleSummary:
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples to summarize")
    if x.size == 1:
        nan = float("nan")
        return SampleSummary(1, float(x[0]), nan, nan, nan, level)
    return mean_ci(x, level)


def _p_value(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) < 2 or len(b) < 2:
        return float("nan")
    try:
        return welch_t_test(a, b)
    except ValueError:
        return float("nan")


def _columns(result: ExperimentResult, scenario: str, metric: str) -> List[Tuple[str, np.ndarray]]:
    """(year label, per-replication samples) for every year plus the total."""
    data = result.yearly[scenario][metric]
    cols = [(str(y), data[:, j]) for j, y in enumerate(result.years)]
    cols.append((TOTAL, data.sum(axis=1)))
    return cols


def report_rows(result: ExperimentResult) -> List[ReportRow]:
    rows = []
    for scenario in sorted(result.yearly):
        for metric in METRICS:
            for year, samples in _columns(result, scenario, metric):
                s = summarize(samples)
                rows.append(ReportRow(year, metric, scenario, s.mean, s.ci_low, s.ci_high))
    return rows


def difference_rows(result: ExperimentResult) -> List[dict]:
    if not {"covid", "nocovid"} <= set(result.yearly):
        return []
    out = []
    for metric in METRICS:
        cov = dict(_columns(result, "covid", metric))
        base = dict(_columns(result, "nocovid", metric))
        for year in cov:
            s = summarize(cov[year] - base[year])
            out.append(
                dict(metric=metric, year=year, mean=s.mean, ci_low=s.ci_low, ci_high=s.ci_high, p_value=_p_value(cov[year], base[year]))
            )
    return out


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating, int, np.integer)) else v for v in row])
    return path


def _display(x: float, scale: float, decimals: int) -> str:
    if math.isnan(x):
        return ""
    return f"{x / scale:.{decimals}f}"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def emit_reports(
    result: ExperimentResult,
    out_dir: Union[str, Path],
    params_rows: Optional[Sequence[Tuple[str, str, str, float]]] = None,
    manifest_extra: Optional[dict] = None,
) -> List[Path]:
    """Write all report files and the run manifest; returns the paths written."""
    if result.replications < 1 or not result.yearly:
        raise ValueError("result has no replications; nothing to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    years = [str(y) for y in result.years] + [TOTAL]

    for scenario in sorted(result.yearly):
        for metric in METRICS:
            rows = []
            for year, samples in _columns(result, scenario, metric):
                s = summarize(samples)
                rows.append([year, s.n, s.mean, s.sd, s.ci_low, s.ci_high])
            written.append(
                _write_csv(out / "raw" / f"{scenario}_{metric}.csv", ["year", "n", "mean", "sd", "ci_low", "ci_high"], rows)
            )

    written.append(
        _write_csv(
            out / "summary.csv",
            ["year", "metric", "scenario", "mean", "ci_low", "ci_high"],
            ([r.year, r.metric, r.scenario, r.mean, r.ci_low, r.ci_high] for r in report_rows(result)),
        )
    )

    rep_rows = []
    for scenario in sorted(result.yearly):
        for i in range(result.replications):
            for j, year in enumerate(result.years):
                rep_rows.append(
                    [scenario, i, result.seeds[scenario][i], year]
                    + [float(result.yearly[scenario][m][i, j]) for m in METRICS]
                )
    written.append(_write_csv(out / "replications.csv", ["scenario", "replication", "seed", "year", *METRICS], rep_rows))

    diffs = difference_rows(result)
    if diffs:
        written.append(
            _write_csv(
                out / "differences.csv",
                ["metric", "year", "mean", "ci_low", "ci_high", "p_value"],
                ([d["metric"], d["year"], d["mean"], d["ci_low"], d["ci_high"], d["p_value"]] for d in diffs),
            )
        )

    for scenario in sorted(result.yearly):
        header = ["year"]
        for m in DISPLAY_COSTS:
            header += [f"{m}_mln_pln", f"{m}_ci_half_width"]
        table = {m: dict(_columns(result, scenario, m)) for m in DISPLAY_COSTS + DISPLAY_EVENTS}
        rows = []
        for year in years:
            row = [year]
            for m in DISPLAY_COSTS:
                s = summarize(table[m][year])
                row += [_display(s.mean, MILLION, 1), _display(s.half_width, MILLION, 1)]
            rows.append(row)
        written.append(_write_csv(out / f"costs_{scenario}.csv", header, rows))

        header = ["year"]
        for m in DISPLAY_EVENTS:
            header += [f"{m}_mean", f"{m}_ci_low", f"{m}_ci_high"]
        rows = []
        for year in years:
            row = [year]
            for m in DISPLAY_EVENTS:
                s = summarize(table[m][year])
                row += [_display(s.mean, 1, 0), _display(s.ci_low, 1, 0), _display(s.ci_high, 1, 0)]
            rows.append(row)
        written.append(_write_csv(out / f"events_{scenario}.csv", header, rows))

    if params_rows is not None:
        written.append(write_params_csv(out / "params.csv", params_rows))

    manifest = {
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(result.config).items()},
        "scenarios": sorted(result.yearly),
        "seeds": result.seeds,
        "calibrated_parameters": [list(r) for r in params_rows] if params_rows is not None else None,
        "files": {str(p.relative_to(out)): _sha256(p) for p in sorted(written)},
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(manifest_path)
    return written


def write_params_csv(path_or_file, rows: Sequence[Tuple[str, str, str, float]]):
    header = ["parameter", "scenario", "stage", "value"]
    if hasattr(path_or_file, "write"):
        w = csv.writer(path_or_file, lineterminator="\n")
        w.writerow(header)
        for name, scenario, stage, value in rows:
            w.writerow([name, scenario, stage, _fmt(float(value))])
        return path_or_file
    return _write_csv(Path(path_or_file), header, rows)


def read_raw_summary(path: Union[str, Path]) -> Dict[str, Dict[str, float]]:
    """Parse a ``raw/<scenario>_<metric>.csv`` file back into floats keyed by year."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out[rec["year"]] = {k: float(v) for k, v in rec.items() if k != "year"}
    return out
