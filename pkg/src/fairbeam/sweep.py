"""Experiment drivers: baseline alpha sweep, fairness-target Pareto sweep,
and deterministic CSV report emission.

Every swept fairness target trains an independent model from scratch
(fresh seed offset, no warm starting), matching the one-network-per-target
protocol behind the published comparison table. Reports are plain CSV with
a single leading JSON metadata comment line and no timestamps, so reruns
on identical inputs are byte-identical.
"""

import json
import math
from dataclasses import dataclass, asdict, replace
from pathlib import Path

import numpy as np

from . import baselines
from .channel import Dataset
from .metrics import ecdf
from .trainer import EvalSummary, TrainConfig, evaluate, train

REPORT_FILES = ("scatter.csv", "ecdf_user.csv", "ecdf_sum.csv",
                "bars_user.csv", "bars_sum.csv", "table2.csv")


@dataclass(frozen=True)
class OperatingPoint:
    """One (method, knob) spot in the sum-rate vs fairness plane."""

    method: str                       # dnn | wslnr | mrt | zf | slnr
    knob: float | None                # alpha (wslnr) or j_lb (dnn)
    mean_sum_rate: float
    mean_jain: float
    lambda_final: float | None = None
    error: str | None = None          # set when a sweep run failed

    def __post_init__(self):
        if self.error is None:
            if not (0 < self.mean_jain <= 1):
                raise ValueError(f"mean_jain out of (0, 1]: {self.mean_jain}")
            if self.mean_sum_rate < 0:
                raise ValueError(f"negative mean sum rate: {self.mean_sum_rate}")


@dataclass
class SweepPoint:
    point: OperatingPoint
    summary: EvalSummary | None       # None for failed runs


def _baseline_fn(method: str, alpha: float | None, power: float):
    if method == "mrt":
        return lambda s: baselines.mrt(s, power)
    if method == "zf":
        return lambda s: baselines.zf(s, power)
    if method == "slnr":
        return lambda s: baselines.slnr(s, power)
    if method == "wslnr":
        if alpha is None:
            raise ValueError("wslnr requires an alpha")
        return lambda s: baselines.wslnr(s, alpha, power)
    raise ValueError(f"unknown baseline method {method!r}")


def evaluate_baseline(method: str, test_set: Dataset, alpha: float | None = None) -> SweepPoint:
    fn = _baseline_fn(method, alpha, test_set.config.power_per_user)
    summary = evaluate(fn, test_set)
    point = OperatingPoint(method=method, knob=alpha, mean_sum_rate=summary.mean_sum_rate,
                           mean_jain=summary.mean_jain)
    return SweepPoint(point=point, summary=summary)


def baseline_sweep(alphas, test_set: Dataset) -> list:
    """Weighted-SLNR operating points over the given exponents."""
    if not list(alphas):
        raise ValueError("alpha list must be nonempty")
    return [evaluate_baseline("wslnr", test_set, alpha=a) for a in alphas]


def reference_points(test_set: Dataset) -> list:
    """Fixed MRT / ZF / SLNR reference points."""
    return [evaluate_baseline(m, test_set) for m in ("mrt", "zf", "slnr")]


def pareto_sweep(j_lbs, train_set: Dataset, val_set: Dataset, test_set: Dataset,
                 base_config: TrainConfig, log=None) -> list:
    """Train one network per fairness target and evaluate it on the test set.

    Each point gets its own seed offset. A failed run is recorded as a
    failed point (error string, NaN metrics) instead of aborting the sweep.
    """
    j_lbs = list(j_lbs)
    if not j_lbs:
        raise ValueError("fairness target list must be nonempty")
    points = []
    for i, j_lb in enumerate(j_lbs):
        config = replace(base_config, j_lb=j_lb, seed=base_config.seed + i,
                         model=replace(base_config.model,
                                       init_seed=base_config.model.init_seed + i))
        try:
            result = train(config, train_set, val_set, log=log)
            summary = evaluate(result.model, test_set, batch_size=config.batch_size)
            point = OperatingPoint(method="dnn", knob=j_lb,
                                   mean_sum_rate=summary.mean_sum_rate,
                                   mean_jain=summary.mean_jain,
                                   lambda_final=result.dual.lam)
            points.append(SweepPoint(point=point, summary=summary))
        except Exception as exc:  # a diverged/broken run must not sink the sweep
            if log is not None:
                log(f"sweep point j_lb={j_lb} failed: {exc}")
            point = OperatingPoint(method="dnn", knob=j_lb, mean_sum_rate=math.nan,
                                   mean_jain=math.nan, error=str(exc))
            points.append(SweepPoint(point=point, summary=None))
    return points


# ---- report emission ---------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{x:.10g}"


def _meta_line(points) -> str:
    ok = [sp for sp in points if sp.point.error is None]
    meta = {
        "format": "fairbeam-report-v1",
        "n_points": len(points),
        "n_failed": len(points) - len(ok),
        "methods": sorted({sp.point.method for sp in points}),
    }
    return "# " + json.dumps(meta, sort_keys=True) + "\n"


def _write_csv(path: Path, meta: str, header, rows) -> None:
    lines = [meta, ",".join(header) + "\n"]
    lines += [",".join(row) + "\n" for row in rows]
    path.write_text("".join(lines))


def sorted_user_rate_profile(summary: EvalSummary) -> np.ndarray:
    """Mean rate per rank after sorting each drop's users weakest to strongest."""
    return np.sort(summary.rates, axis=1).mean(axis=0)


def emit_reports(points, out_dir) -> list:
    """Write the scatter/ECDF/bar/table CSV bundle; returns the file paths.

    Failed sweep points contribute to no file except the metadata counts.
    The comparison table pairs wSLNR and DNN points in ascending knob
    order (the published layout), padding the shorter side with blanks.
    """
    if not points:
        raise ValueError("nothing to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = _meta_line(points)
    ok = [sp for sp in points if sp.point.error is None]

    _write_csv(out_dir / "scatter.csv", meta, ["jain", "sum_rate", "method", "knob"],
               [[_fmt(sp.point.mean_jain), _fmt(sp.point.mean_sum_rate),
                 sp.point.method, _fmt(sp.point.knob)] for sp in ok])

    user_rows, sum_rows = [], []
    for sp in ok:
        tag = [sp.point.method, _fmt(sp.point.knob)]
        for value, prob in ecdf(sp.summary.rates.ravel()):
            user_rows.append(tag + [_fmt(value), _fmt(prob)])
        for value, prob in ecdf(sp.summary.sum_rates):
            sum_rows.append(tag + [_fmt(value), _fmt(prob)])
    _write_csv(out_dir / "ecdf_user.csv", meta,
               ["method", "knob", "rate", "cum_prob"], user_rows)
    _write_csv(out_dir / "ecdf_sum.csv", meta,
               ["method", "knob", "sum_rate", "cum_prob"], sum_rows)

    bars_user = []
    for sp in ok:
        profile = sorted_user_rate_profile(sp.summary)
        bars_user += [[sp.point.method, _fmt(sp.point.knob), str(rank + 1), _fmt(r)]
                      for rank, r in enumerate(profile)]
    _write_csv(out_dir / "bars_user.csv", meta,
               ["method", "knob", "user_rank", "mean_rate"], bars_user)

    _write_csv(out_dir / "bars_sum.csv", meta, ["method", "knob", "mean_sum_rate"],
               [[sp.point.method, _fmt(sp.point.knob), _fmt(sp.point.mean_sum_rate)]
                for sp in ok])

    wslnr_pts = sorted((sp.point for sp in ok if sp.point.method == "wslnr"),
                       key=lambda p: p.knob)
    dnn_pts = sorted((sp.point for sp in ok if sp.point.method == "dnn"),
                     key=lambda p: p.knob)
    table_rows = []
    for i in range(max(len(wslnr_pts), len(dnn_pts))):
        w = wslnr_pts[i] if i < len(wslnr_pts) else None
        d = dnn_pts[i] if i < len(dnn_pts) else None
        table_rows.append([
            _fmt(w.knob) if w else "", _fmt(w.mean_sum_rate) if w else "",
            _fmt(d.knob) if d else "", _fmt(d.mean_jain) if d else "",
            _fmt(d.lambda_final) if d else "", _fmt(d.mean_sum_rate) if d else "",
        ])
    _write_csv(out_dir / "table2.csv", meta,
               ["alpha", "wslnr_mean_sr", "j_lb", "j_dnn", "lambda", "dnn_mean_sr"],
               table_rows)
    return [out_dir / name for name in REPORT_FILES]


# ---- sweep persistence (consumed by the report subcommand) -------------------


def save_sweep_results(points, out_dir) -> None:
    """points.json plus one .npz of raw per-sample arrays per successful point."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, sp in enumerate(points):
        entry = asdict(sp.point)
        if sp.summary is not None:
            entry["arrays"] = f"point_{i:03d}.npz"
            np.savez(out_dir / entry["arrays"], rates=sp.summary.rates,
                     sum_rates=sp.summary.sum_rates, jains=sp.summary.jains)
        else:
            entry["arrays"] = None
        entries.append(entry)
    (out_dir / "points.json").write_text(json.dumps(entries, indent=2, sort_keys=True))


def load_sweep_results(results_dir) -> list:
    results_dir = Path(results_dir)
    entries = json.loads((results_dir / "points.json").read_text())
    points = []
    for entry in entries:
        arrays = entry.pop("arrays", None)
        point = OperatingPoint(**entry)
        summary = None
        if arrays is not None:
            data = np.load(results_dir / arrays)
            summary = EvalSummary(
                mean_sum_rate=float(data["sum_rates"].mean()),
                mean_jain=float(data["jains"].mean()),
                rates=data["rates"], sum_rates=data["sum_rates"], jains=data["jains"])
        points.append(SweepPoint(point=point, summary=summary))
    return points
