"""Next-day close forecasting by MAP search over a discretised observation grid.

Given a fitted model, the fractional features of the previous ``d`` days and
the target day's open, every candidate observation ``c`` on the grid is
scored by the joint log-likelihood ``log P(O_1..O_d, c | model)``. The
winner's fractional change turns the open into a predicted close.

Scoring shares the forward pass over the ``d``-day prefix: with
``p_j = log P(O_1..O_d, S_{d+1} = j)`` precomputed, each candidate costs one
emission evaluation and a log-sum-exp over states.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ArgumentError, InsufficientDataError
from .features import FeatureSet, ObservationVector, fractional_features
from .hmm import GaussianHmm, as_observation_matrix, forward_pass, propagate
from .market_data import SymbolSeries

FORECAST_COLUMNS = ("date", "open", "actual_close", "predicted_close", "frac_change", "log_likelihood")


@dataclass(frozen=True)
class GridSpec:
    change_min: float = -0.1
    change_max: float = 0.1
    change_steps: int = 50
    high_min: float = 0.0
    high_max: float = 0.1
    high_steps: int = 10
    low_min: float = 0.0
    low_max: float = 0.1
    low_steps: int = 10

    def __post_init__(self):
        for axis in ("change", "high", "low"):
            lo, hi, steps = (getattr(self, f"{axis}_{k}") for k in ("min", "max", "steps"))
            if int(steps) != steps or steps < 1:
                raise ArgumentError(f"{axis}_steps must be a positive integer, got {steps}")
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ArgumentError(f"{axis}_min must not exceed {axis}_max")

    @property
    def size(self) -> int:
        return self.change_steps * self.high_steps * self.low_steps


@dataclass(frozen=True)
class PredictorConfig:
    latency_days: int = 30
    grid: GridSpec = field(default_factory=GridSpec)
    jobs: int = 1

    def __post_init__(self):
        if self.latency_days < 1:
            raise ArgumentError("latency_days must be >= 1")
        if self.jobs < 1:
            raise ArgumentError("jobs must be >= 1")


@dataclass(frozen=True)
class Forecast:
    """One predicted close.

    ``candidate`` and ``log_likelihood`` are set by the MAP predictor;
    ``expected_delta`` by the fluctuation baseline.
    """

    date: Optional[dt.date]
    open: float
    predicted_close: float
    actual_close: Optional[float] = None
    candidate: Optional[ObservationVector] = None
    log_likelihood: Optional[float] = None
    expected_delta: Optional[float] = None

    @property
    def frac_change(self) -> Optional[float]:
        return None if self.candidate is None else self.candidate.frac_change


def _axis(lo: float, hi: float, steps: int) -> np.ndarray:
    # inclusive endpoints: `steps` points from lo to hi
    return np.linspace(lo, hi, int(steps))


@lru_cache(maxsize=8)
def _cached_grid(spec: GridSpec) -> np.ndarray:
    c = _axis(spec.change_min, spec.change_max, spec.change_steps)
    h = _axis(spec.high_min, spec.high_max, spec.high_steps)
    l = _axis(spec.low_min, spec.low_max, spec.low_steps)
    grid = np.stack(np.meshgrid(c, h, l, indexing="ij"), axis=-1).reshape(-1, 3)
    grid.setflags(write=False)
    return grid


def build_grid(spec: GridSpec = GridSpec()) -> np.ndarray:
    """Cartesian product of the three axes as an (N, 3) array.

    Rows are ordered with the change axis outermost, then high, then low.
    """
    return _cached_grid(spec)


class IncrementalScorer:
    """Scores candidate next observations against a fixed window.

    ``scorer(c)`` equals ``forward_log_likelihood(model, window + [c])``; the
    forward pass over ``window`` is computed once at construction.
    """

    def __init__(self, model: GaussianHmm, window):
        self.model = model
        W = np.asarray(window, dtype=float)
        if W.size == 0:
            self.predictive = np.array(model.log_start)
        else:
            log_alpha, _ = forward_pass(model, W)
            self.predictive = propagate(log_alpha[-1], model.transition)

    def scores(self, candidates) -> np.ndarray:
        C = as_observation_matrix(np.atleast_2d(candidates), self.model.dim)
        return logsumexp(self.predictive + self.model.log_emissions(C), axis=1)

    def __call__(self, candidate) -> float:
        return float(self.scores(np.reshape(candidate, (1, -1)))[0])

    def argmax(self, candidates, jobs: int = 1) -> tuple[int, float]:
        """Index and score of the best candidate; ties go to the lowest index."""
        C = np.asarray(candidates, dtype=float)
        if len(C) == 0:
            raise ArgumentError("candidate grid is empty")
        if jobs <= 1 or len(C) < 2 * jobs:
            s = self.scores(C)
            i = int(np.argmax(s))
            return i, float(s[i])
        bounds = np.linspace(0, len(C), jobs + 1).astype(int)

        def best(k):
            lo, hi = bounds[k], bounds[k + 1]
            s = self.scores(C[lo:hi])
            i = int(np.argmax(s))
            return lo + i, float(s[i])

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(best, range(jobs)))
        return min(results, key=lambda r: (-r[1], r[0]))


def incremental_scorer(model: GaussianHmm, window) -> IncrementalScorer:
    return IncrementalScorer(model, window)


def map_next_observation(
    model: GaussianHmm, window, grid=None, jobs: int = 1
) -> tuple[ObservationVector, float]:
    """MAP estimate of the next observation over ``grid`` (default grid if omitted)."""
    grid = build_grid() if grid is None else np.asarray(grid, dtype=float)
    index, score = IncrementalScorer(model, window).argmax(grid, jobs=jobs)
    return ObservationVector(*map(float, grid[index])), score


def _forecast(model, window, open_price, config, date=None, actual=None) -> Forecast:
    if not open_price > 0:
        raise ArgumentError(f"open price must be positive, got {open_price}")
    best, score = map_next_observation(model, window, build_grid(config.grid), jobs=config.jobs)
    return Forecast(
        date=date,
        open=float(open_price),
        predicted_close=float(open_price) * (1.0 + best.frac_change),
        actual_close=actual,
        candidate=best,
        log_likelihood=score,
    )


def predict_close(
    model: GaussianHmm,
    history: SymbolSeries,
    open_price: float,
    config: PredictorConfig = PredictorConfig(),
    date: Optional[dt.date] = None,
) -> Forecast:
    """Predict the close of the day following ``history`` from its open price."""
    window = fractional_features(history).values[-config.latency_days:]
    if len(window) == 0:
        raise InsufficientDataError("history has no usable bar to condition on")
    return _forecast(model, window, open_price, config, date=date)


def _check_range(series: SymbolSeries, start_index: int, horizon: int) -> None:
    if start_index < 1 or horizon < 0 or start_index + horizon > len(series):
        raise ArgumentError(
            f"forecast range [{start_index}, {start_index + horizon}) is outside "
            f"[1, {len(series)}] for {series.symbol}"
        )


def rolling_forecast(
    model: GaussianHmm,
    series: SymbolSeries,
    start_index: int,
    horizon: int,
    config: PredictorConfig = PredictorConfig(),
    features: Optional[FeatureSet] = None,
) -> list[Forecast]:
    """One-step forecasts for days ``start_index .. start_index + horizon - 1``.

    Each day conditions on the observed features of the ``d`` preceding days
    and on its own actual open; earlier predictions are never fed back.
    """
    _check_range(series, start_index, horizon)
    features = fractional_features(series) if features is None else features
    out = []
    for t in range(start_index, start_index + horizon):
        window = features.before(t, config.latency_days)
        if len(window) == 0:
            raise InsufficientDataError(f"no usable bar before position {t}")
        bar = series.bars[t]
        out.append(_forecast(model, window, bar.open, config, date=bar.date, actual=bar.close))
    return out


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, dt.date):
        return value.isoformat()
    return repr(float(value))


def write_forecasts_csv(forecasts: Sequence[Forecast], path, method: Optional[str] = None) -> None:
    header = list(FORECAST_COLUMNS) + (["method"] if method else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for f in forecasts:
            row = [_cell(f.date), _cell(f.open), _cell(f.actual_close), _cell(f.predicted_close),
                   _cell(f.frac_change), _cell(f.log_likelihood)]
            writer.writerow(row + ([method] if method else []))
