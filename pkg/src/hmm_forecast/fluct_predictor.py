"""Successive-fluctuation baseline.

An HMM is fitted on ``(close_t - close_{t-1}, volume_t)`` pairs. The expected
next delta is the delta coordinate of the one-step-ahead expected
observation, ``posterior @ A @ mu``, where ``posterior`` is the filtered
state distribution after the latest observed day. The forecast adds it to
the previous close.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import ArgumentError, InsufficientDataError
from .features import delta_features
from .hmm import FitConfig, FitReport, GaussianHmm, filter_posterior, fit_baum_welch
from .map_predictor import Forecast, _check_range
from .market_data import SymbolSeries

DELTA, VOLUME = 0, 1


@dataclass(frozen=True, eq=False)
class FluctModel:
    hmm: GaussianHmm
    last_close: float
    posterior: np.ndarray
    report: Optional[FitReport] = field(default=None, compare=False)

    def __post_init__(self):
        p = np.array(self.posterior, dtype=float)
        if p.shape != (self.hmm.n_states,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-8:
            raise ArgumentError("posterior must be a probability vector over the model's states")
        p.setflags(write=False)
        object.__setattr__(self, "posterior", p)

    def advance(self, delta: float, volume: float, close: Optional[float] = None) -> "FluctModel":
        """Filter update with one newly observed ``(delta, volume)`` day."""
        with np.errstate(divide="ignore"):
            log_pred = np.log(self.posterior @ self.hmm.transition)
        log_post = log_pred + self.hmm.log_emissions(np.array([[delta, volume]]))[0]
        post = np.exp(log_post - logsumexp(log_post))
        post /= post.sum()
        new_close = self.last_close + delta if close is None else close
        return FluctModel(self.hmm, new_close, post, self.report)

    def conditioned_on(self, history: SymbolSeries) -> "FluctModel":
        """Same HMM, posterior re-filtered over the deltas of ``history``."""
        if len(history) >= 2:
            posterior = filter_posterior(self.hmm, delta_features(history).values)
        else:
            posterior = np.array(self.hmm.start_prob)
        return FluctModel(self.hmm, history.bars[-1].close, posterior, self.report)


def fit_fluct(series: SymbolSeries, n_states: int = 4, config: Optional[FitConfig] = None) -> FluctModel:
    if len(series) < n_states + 1:
        raise InsufficientDataError(
            f"{series.symbol}: need at least {n_states + 1} bars for {n_states} states, have {len(series)}"
        )
    X = delta_features(series).values
    hmm, report = fit_baum_welch(X, n_states, config)
    return FluctModel(hmm, series.bars[-1].close, filter_posterior(hmm, X), report)


def predict_next_delta(model: FluctModel) -> float:
    next_state = model.posterior @ model.hmm.transition
    return float(next_state @ model.hmm.means[:, DELTA])


def predict_close_fluct(model: FluctModel, prev_close: float) -> float:
    if not prev_close > 0:
        raise ArgumentError(f"previous close must be positive, got {prev_close}")
    return prev_close + predict_next_delta(model)


def rolling_forecast_fluct(
    model: FluctModel, series: SymbolSeries, start_index: int, horizon: int
) -> list[Forecast]:
    """Forecast days ``start_index .. start_index + horizon - 1`` causally.

    The posterior is first re-filtered over the true history before
    ``start_index``; after each forecast it is advanced with that day's
    observed delta and volume.
    """
    _check_range(series, start_index, horizon)
    state = model.conditioned_on(series[:start_index])
    out = []
    for t in range(start_index, start_index + horizon):
        prev, bar = series.bars[t - 1], series.bars[t]
        delta = predict_next_delta(state)
        out.append(Forecast(
            date=bar.date,
            open=bar.open,
            predicted_close=predict_close_fluct(state, prev.close),
            actual_close=bar.close,
            expected_delta=delta,
        ))
        state = state.advance(bar.close - prev.close, bar.volume, close=bar.close)
    return out
