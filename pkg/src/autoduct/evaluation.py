"""Error metrics, ratio analysis, slice predictions, and multi-run
statistics.

Metric definitions (targets y, predicted means yhat, n points):

    RMSE  = sqrt( (1/n) sum (y - yhat)^2 )          [kW/m^2]
    MAPE  = (100/n) sum |(y - yhat) / y|            [%]
    RMSPE = 100 sqrt( (1/n) sum ((y - yhat)/y)^2 )  [%]

Percentage metrics are undefined at y = 0 and raise ZeroTarget naming
the offending index; conforming data cannot trigger this (the target
envelope starts at 50). Ratio analysis reports yhat/y with the inside
fraction taken over the closed interval [0.5, 2.0].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import FEATURE_NAMES, Dataset, SliceSpec, build_slice_grid
from .ensemble import Ensemble, EnsemblePrediction
from .errors import EmptyInput, LengthMismatch, ZeroTarget
from .stats import central_interval_z

# default band level: the probability mass of mean +/- 2 sigma
TWO_SIGMA_LEVEL = 0.9544997361036416

RATIO_INSIDE_BOUNDS = (0.5, 2.0)


@dataclass(frozen=True)
class MetricsReport:
    split_label: str
    n: int
    rmse: float
    mape: float
    rmspe: float
    ratio_mean: float
    ratio_std: float
    ratio_inside_frac: float

    def to_dict(self) -> dict:
        return {"split": self.split_label, "n": self.n, "rmse_kw_m2": self.rmse,
                "mape_pct": self.mape, "rmspe_pct": self.rmspe,
                "ratio_mean": self.ratio_mean, "ratio_std": self.ratio_std,
                "ratio_inside_frac": self.ratio_inside_frac}


def _paired(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 1:
        raise LengthMismatch(f"targets {y.shape} vs predictions {yhat.shape}")
    if y.size == 0:
        raise EmptyInput("metrics need at least one point")
    return y, yhat


def rmse(y, yhat) -> float:
    y, yhat = _paired(y, yhat)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def _relative_residuals(y: np.ndarray, yhat: np.ndarray) -> np.ndarray:
    zero = np.nonzero(y == 0.0)[0]
    if zero.size:
        raise ZeroTarget(int(zero[0]))
    return (y - yhat) / y


def mape(y, yhat) -> float:
    y, yhat = _paired(y, yhat)
    return float(100.0 * np.mean(np.abs(_relative_residuals(y, yhat))))


def rmspe(y, yhat) -> float:
    y, yhat = _paired(y, yhat)
    return float(100.0 * np.sqrt(np.mean(_relative_residuals(y, yhat) ** 2)))


@dataclass(frozen=True)
class RatioSeries:
    """Scatter series for one input feature: predicted-to-measured ratio
    against the feature scaled to [0, 1] over the evaluated set."""

    feature: str
    x: np.ndarray
    ratios: np.ndarray


@dataclass(frozen=True)
class RatioAnalysis:
    ratios: np.ndarray
    mean: float
    std: float
    inside_frac: float
    series: tuple[RatioSeries, ...]


def ratio_analysis(y, yhat, features: np.ndarray) -> RatioAnalysis:
    y, yhat = _paired(y, yhat)
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (y.size, len(FEATURE_NAMES)):
        raise LengthMismatch(f"features {features.shape} do not match {y.size} points")
    zero = np.nonzero(y == 0.0)[0]
    if zero.size:
        raise ZeroTarget(int(zero[0]))
    ratios = yhat / y
    lo, hi = RATIO_INSIDE_BOUNDS
    inside = float(np.mean((ratios >= lo) & (ratios <= hi)))
    series = []
    for j, name in enumerate(FEATURE_NAMES):
        col = features[:, j]
        span = col.max() - col.min()
        x = (col - col.min()) / span if span > 0 else np.zeros_like(col)
        series.append(RatioSeries(name, x, ratios.copy()))
    return RatioAnalysis(ratios=ratios, mean=float(ratios.mean()),
                         std=float(ratios.std()), inside_frac=inside,
                         series=tuple(series))


@dataclass(frozen=True)
class ModelEvaluation:
    report: MetricsReport
    predictions: list[EnsemblePrediction]
    dataset: Dataset
    level: float


def evaluate_model(ens: Ensemble, ds: Dataset, level: float = TWO_SIGMA_LEVEL,
                   split_label: str = "test") -> ModelEvaluation:
    """Point metrics plus the per-point mixture moments. The level rides
    along for band rendering by the exporters."""
    if not ds.has_targets:
        raise ValueError("evaluation needs a dataset with targets")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie strictly inside (0, 1), got {level}")
    preds = ens.predict(ds.features)
    yhat = np.array([p.mean for p in preds])
    y = ds.targets
    ratios = ratio_analysis(y, yhat, ds.features)
    report = MetricsReport(split_label=split_label, n=len(ds),
                           rmse=rmse(y, yhat), mape=mape(y, yhat),
                           rmspe=rmspe(y, yhat), ratio_mean=ratios.mean,
                           ratio_std=ratios.std, ratio_inside_frac=ratios.inside_frac)
    return ModelEvaluation(report, preds, ds, level)


@dataclass(frozen=True)
class SliceResult:
    spec: SliceSpec
    grid: Dataset
    predictions: list[EnsemblePrediction]
    band_lo: np.ndarray
    band_hi: np.ndarray
    reference: np.ndarray | None


@dataclass(frozen=True)
class SliceReport:
    results: tuple[SliceResult, ...]
    level: float


def evaluate_slices(ens: Ensemble, specs: list[SliceSpec],
                    level: float = TWO_SIGMA_LEVEL,
                    references: dict[str, np.ndarray] | None = None) -> SliceReport:
    """Mean and total-uncertainty band along each slice grid.

    references optionally maps a slice id to measured values on the same
    grid (e.g. a look-up-table export) for overlay in reports.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie strictly inside (0, 1), got {level}")
    z = central_interval_z(level)
    results = []
    for spec in specs:
        grid = build_slice_grid(spec)
        preds = ens.predict(grid.features)
        mean = np.array([p.mean for p in preds])
        half = z * np.sqrt(np.array([p.total_var for p in preds]))
        reference = None
        if references is not None and spec.slice_id in references:
            reference = np.asarray(references[spec.slice_id], dtype=np.float64)
            if reference.shape != (len(grid),):
                raise LengthMismatch(
                    f"reference for slice {spec.slice_id} has {reference.size} points, "
                    f"grid has {len(grid)}")
        results.append(SliceResult(spec, grid, preds, mean - half, mean + half,
                                   reference))
    return SliceReport(tuple(results), level)


@dataclass(frozen=True)
class TrialStats:
    """Robustness summary over N independent agent runs."""

    n_runs: int
    avg_rmse: float | None
    min_rmse: float | None
    max_rmse: float | None
    completed_zero_errors: int
    completed_one_error: int
    completed_two_plus_errors: int
    failures: int
    avg_total_tokens: float

    def to_dict(self) -> dict:
        return {"n_runs": self.n_runs, "avg_rmse": self.avg_rmse,
                "min_rmse": self.min_rmse, "max_rmse": self.max_rmse,
                "completed_zero_errors": self.completed_zero_errors,
                "completed_one_error": self.completed_one_error,
                "completed_two_plus_errors": self.completed_two_plus_errors,
                "failures": self.failures,
                "avg_total_tokens": self.avg_total_tokens}


def aggregate_trials(run_reports: list[dict]) -> TrialStats:
    """Collapse final run reports into the robustness table.

    A run counts as a failure when its status is not "completed"; error
    buckets partition the completed runs by total error count, so the
    four counts always sum to N.
    """
    if not run_reports:
        raise EmptyInput("need at least one run report")
    rmses = []
    buckets = [0, 0, 0]
    failures = 0
    tokens = []
    for report in run_reports:
        tokens.append(float(report.get("tokens", {}).get("total", 0)))
        if report.get("status") != "completed":
            failures += 1
            continue
        errors = int(report.get("errors", {}).get("total", 0))
        buckets[min(errors, 2)] += 1
        metrics = report.get("metrics") or {}
        if "rmse_kw_m2" in metrics:
            rmses.append(float(metrics["rmse_kw_m2"]))
    return TrialStats(
        n_runs=len(run_reports),
        avg_rmse=float(np.mean(rmses)) if rmses else None,
        min_rmse=min(rmses) if rmses else None,
        max_rmse=max(rmses) if rmses else None,
        completed_zero_errors=buckets[0],
        completed_one_error=buckets[1],
        completed_two_plus_errors=buckets[2],
        failures=failures,
        avg_total_tokens=float(np.mean(tokens)),
    )


def format_trial_table(stats: TrialStats, label: str) -> str:
    """Fixed-layout text rendering of TrialStats."""
    def num(v) -> str:
        return "n/a" if v is None else f"{v:.1f}"

    rows = [
        ("Average RMSE (kW/m^2)", num(stats.avg_rmse)),
        ("Minimum RMSE (kW/m^2)", num(stats.min_rmse)),
        ("Maximum RMSE (kW/m^2)", num(stats.max_rmse)),
        ("Completed without error", str(stats.completed_zero_errors)),
        ("Completed with one error", str(stats.completed_one_error)),
        ("Completed with two or more errors", str(stats.completed_two_plus_errors)),
        ("Failed runs", str(stats.failures)),
        ("Average token usage", f"{stats.avg_total_tokens:.1f}"),
    ]
    width = max(len(name) for name, _ in rows)
    lines = [f"Robustness over {stats.n_runs} runs ({label})"]
    lines += [f"  {name.ljust(width)}  {value}" for name, value in rows]
    return "\n".join(lines) + "\n"
