"""Gaussian hidden Markov models for next-day closing price forecasts.

Two predictors are provided: a MAP search over discretised fractional-change
observations (:mod:`hmm_forecast.map_predictor`) and a successive-fluctuation
baseline (:mod:`hmm_forecast.fluct_predictor`).
"""

from .evaluation import BacktestReport, Method, build_report, mae, mape, rmse
from .features import DeltaObservation, ObservationVector, delta_features, fractional_features
from .fluct_predictor import FluctModel, fit_fluct, predict_close_fluct, predict_next_delta, rolling_forecast_fluct
from .hmm import (
    FitConfig,
    FitReport,
    GaussianHmm,
    fit_baum_welch,
    forward_log_likelihood,
    forward_pass,
    log_gaussian_density,
)
from .map_predictor import (
    Forecast,
    GridSpec,
    IncrementalScorer,
    PredictorConfig,
    build_grid,
    incremental_scorer,
    map_next_observation,
    predict_close,
    rolling_forecast,
)
from .market_data import (
    SplitSeries,
    StockBar,
    SymbolSeries,
    chronological_split,
    clean,
    load_csv,
    load_json_archive,
    load_symbol,
)
from .serialization import deserialize, load_model, save_model, serialize

__version__ = "0.1.0"
