"""Forecast error metrics and backtest reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArgumentError, DataError, DomainError
from .map_predictor import Forecast, write_forecasts_csv


class Method(str, Enum):
    MAP_FRACTIONAL = "map_fractional"
    SUCCESSIVE_FLUCTUATION = "successive_fluctuation"


def _pairs(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if y.ndim != 1 or y.shape != p.shape:
        raise ArgumentError(f"actual and predicted must be equal-length vectors, got {y.shape} and {p.shape}")
    if y.size == 0:
        raise ArgumentError("cannot compute a metric over zero forecasts")
    return y, p


def mae(actual, predicted) -> float:
    y, p = _pairs(actual, predicted)
    return float(np.mean(np.abs(p - y)))


def rmse(actual, predicted) -> float:
    y, p = _pairs(actual, predicted)
    return math.sqrt(float(np.mean((p - y) ** 2)))


def mape(actual, predicted) -> float:
    """Mean absolute percentage error, in percent."""
    y, p = _pairs(actual, predicted)
    zero = np.flatnonzero(y == 0)
    if zero.size:
        raise DomainError(f"MAPE undefined: actual value is zero at indices {zero.tolist()}", zero)
    return float(np.mean(np.abs(p - y) / np.abs(y)) * 100.0)


@dataclass(frozen=True)
class BacktestReport:
    symbol: str
    method: Method
    forecasts: tuple[Forecast, ...]
    mae: float
    rmse: float
    mape: float
    n_days: int

    def summary(self) -> dict:
        first = next((f.date for f in self.forecasts if f.date is not None), None)
        last = next((f.date for f in reversed(self.forecasts) if f.date is not None), None)
        return {
            "symbol": self.symbol,
            "method": self.method.value,
            "n_days": self.n_days,
            "first_date": first and first.isoformat(),
            "last_date": last and last.isoformat(),
            "mae": self.mae,
            "rmse": self.rmse,
            "mape": self.mape,
        }


def build_report(forecasts: Sequence[Forecast], symbol: str, method) -> BacktestReport:
    evaluable = [f for f in forecasts if f.actual_close is not None]
    if not evaluable:
        raise DataError("no evaluable forecasts (none carries an actual close)")
    y = [f.actual_close for f in evaluable]
    p = [f.predicted_close for f in evaluable]
    return BacktestReport(
        symbol=symbol,
        method=Method(method),
        forecasts=tuple(forecasts),
        mae=mae(y, p),
        rmse=rmse(y, p),
        mape=mape(y, p),
        n_days=len(evaluable),
    )


def write_plot_data(forecasts: Sequence[Forecast], path) -> None:
    """``date,actual,predicted`` columns for external plotting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "actual", "predicted"])
        for f in forecasts:
            writer.writerow([
                "" if f.date is None else f.date.isoformat(),
                "" if f.actual_close is None else repr(float(f.actual_close)),
                repr(float(f.predicted_close)),
            ])


def write_report(report: BacktestReport, out_dir) -> dict[str, Path]:
    """Write summary JSON, forecast CSV and plot data; return the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{report.symbol}.{report.method.value}"
    paths = {
        "report": out_dir / f"{stem}.report.json",
        "forecasts": out_dir / f"{stem}.forecasts.csv",
        "plot": out_dir / f"{stem}.plot.csv",
    }
    paths["report"].write_text(json.dumps(report.summary(), indent=2) + "\n", encoding="utf-8")
    write_forecasts_csv(report.forecasts, paths["forecasts"], method=report.method.value)
    write_plot_data(report.forecasts, paths["plot"])
    return paths
