"""Accuracy metrics, the weekly naive benchmark and the multivariate Giacomini-White test."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.stats import norm

from .errors import DegenerateBaseline, DegenerateDifferential, InsufficientHistory, ShapeMismatch

GW_MIN_DAYS = 30


class SmallSampleWarning(UserWarning):
    pass


def _pair(actual, forecast):
    a = np.asarray(actual, dtype=np.float64)
    f = np.asarray(forecast, dtype=np.float64)
    if a.shape != f.shape:
        raise ShapeMismatch(f"actual {a.shape} and forecast {f.shape} differ")
    if a.ndim != 2 or a.shape[0] < 1:
        raise ShapeMismatch("expected a (days, hours) matrix with at least one day")
    return a, f


def rmse(actual, forecast) -> float:
    a, f = _pair(actual, forecast)
    return float(np.sqrt(np.mean((a - f) ** 2)))


def mae(actual, forecast) -> float:
    a, f = _pair(actual, forecast)
    return float(np.mean(np.abs(a - f)))


def rmse_per_hour(actual, forecast) -> np.ndarray:
    a, f = _pair(actual, forecast)
    return np.sqrt(np.mean((a - f) ** 2, axis=0))


def mae_per_hour(actual, forecast) -> np.ndarray:
    a, f = _pair(actual, forecast)
    return np.mean(np.abs(a - f), axis=0)


def weekly_naive(price, day: int, hour: int | None = None):
    """Same hour one week earlier: ``price[day - 7, hour]`` (the whole row if ``hour`` is None)."""
    if day < 7:
        raise InsufficientHistory(f"weekly naive needs day >= 7, got {day}")
    p = np.asarray(price)
    return p[day - 7] if hour is None else float(p[day - 7, hour])


def weekly_naive_matrix(price, days) -> np.ndarray:
    days = np.asarray(days, dtype=np.int64)
    if days.size and days.min() < 7:
        raise InsufficientHistory("weekly naive needs at least 7 days of history")
    return np.asarray(price, dtype=np.float64)[days - 7]


def rmae(model_mae: float, naive_mae: float) -> float:
    if not naive_mae > 0:
        raise DegenerateBaseline("naive MAE is zero; relative MAE undefined")
    return model_mae / naive_mae


def loss_differential(errors_a, errors_b) -> np.ndarray:
    """Daily ``sum_h |e_A| - sum_h |e_B|``."""
    a, b = _pair(errors_a, errors_b)
    return np.abs(a).sum(axis=1) - np.abs(b).sum(axis=1)


@dataclass(frozen=True)
class GWResult:
    statistic: float
    p_value: float
    n: int


def gw_test(errors_a, errors_b) -> GWResult:
    """One-sided unconditional GW test on the daily L1 loss differential.

    ``statistic`` is the studentized mean of ``|e_A| - |e_B|`` (negative when A
    is more accurate); the p-value is ``Phi(statistic)``, so a small value
    means A forecasts significantly better than B.
    """
    delta = loss_differential(errors_a, errors_b)
    n = delta.size
    if n < 2:
        raise DegenerateDifferential("need at least two days")
    sd = float(np.std(delta, ddof=1))
    if not sd > 0:
        raise DegenerateDifferential("loss differential has zero variance")
    if n < GW_MIN_DAYS:
        warnings.warn(f"GW test on only {n} days; normal approximation is rough", SmallSampleWarning, stacklevel=2)
    stat = float(np.mean(delta) / (sd / math.sqrt(n)))
    return GWResult(stat, float(norm.cdf(stat)), n)


def gw_matrix(errors: Mapping[str, np.ndarray]) -> tuple[list[str], np.ndarray]:
    """p-values with column model as A (candidate better) and row model as B.

    Diagonal and degenerate pairs are NaN.
    """
    names = list(errors)
    k = len(names)
    P = np.full((k, k), np.nan)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallSampleWarning)
        for i, row in enumerate(names):
            for j, col in enumerate(names):
                if i == j:
                    continue
                try:
                    P[i, j] = gw_test(errors[col], errors[row]).p_value
                except DegenerateDifferential:
                    pass
    return names, P


# --------------------------------------------------------------------------- reports


@dataclass
class ModelMetrics:
    rmse: float
    mae: float
    rmae: float
    rmse_hour: np.ndarray
    mae_hour: np.ndarray


@dataclass
class EvalReport:
    metrics: dict[str, ModelMetrics]
    gw_names: list[str]
    gw_pvalues: np.ndarray
    dates: tuple = ()
    warnings: list[str] = field(default_factory=list)


def evaluate(actual, forecasts: Mapping[str, np.ndarray], naive, naive_name: str = "weekly_naive", dates=()) -> EvalReport:
    """Metrics for every model plus the naive benchmark, and the GW p-value matrix."""
    actual = np.asarray(actual, dtype=np.float64)
    all_fc = {naive_name: np.asarray(naive, dtype=np.float64)}
    all_fc.update({k: np.asarray(v, dtype=np.float64) for k, v in forecasts.items() if k != naive_name})
    naive_mae = mae(actual, all_fc[naive_name])
    metrics = {}
    for name, fc in all_fc.items():
        m = mae(actual, fc)
        metrics[name] = ModelMetrics(rmse(actual, fc), m, rmae(m, naive_mae), rmse_per_hour(actual, fc), mae_per_hour(actual, fc))
    notes = []
    if actual.shape[0] < GW_MIN_DAYS:
        notes.append(f"GW test on {actual.shape[0]} days (< {GW_MIN_DAYS}); p-values are approximate")
    names, P = gw_matrix({k: actual - v for k, v in all_fc.items()})
    d = tuple(str(x) for x in dates)
    return EvalReport(metrics, names, P, (d[0], d[-1]) if d else (), notes)


def _num(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def write_metrics_csv(report: EvalReport, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["model", "rmse", "mae", "rmae"])
        for name, m in report.metrics.items():
            w.writerow([name, _num(m.rmse), _num(m.mae), _num(m.rmae)])


def write_hourly_csv(report: EvalReport, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["model", "hour", "rmse", "mae"])
        for name, m in report.metrics.items():
            for h in range(m.rmse_hour.size):
                w.writerow([name, h, _num(m.rmse_hour[h]), _num(m.mae_hour[h])])


def write_gw_csv(report: EvalReport, path):
    """Rows are the worse-candidate models (B), columns the better-candidate models (A)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow([""] + report.gw_names)
        for i, name in enumerate(report.gw_names):
            w.writerow([name] + [_num(v) for v in report.gw_pvalues[i]])
