"""Command-line entry point: ingest, train, backtest, predict.

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines, then command-line flags (flags win). Progress goes to
stderr; machine-readable results go to files and stdout.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ArgumentError, DataError, HmmForecastError, NumericError
from .evaluation import Method, build_report, write_report
from .features import fractional_features
from .fluct_predictor import FluctModel, fit_fluct, predict_close_fluct, predict_next_delta, rolling_forecast_fluct
from .hmm import FitConfig, GaussianHmm, fit_baum_welch
from .map_predictor import GridSpec, PredictorConfig, predict_close, rolling_forecast, write_forecasts_csv
from .market_data import SymbolSeries, chronological_split, clean, load_json_archive, load_symbol, write_csv
from .serialization import load_model, save_model

logger = logging.getLogger("hmm_forecast")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

GRID_FIELDS = [f.name for f in dataclasses.fields(GridSpec)]


@dataclass
class RunConfig:
    data: Optional[str] = None
    symbol: Optional[str] = None
    method: Method = Method.MAP_FRACTIONAL
    n_states: int = 4
    latency: int = 30
    grid: GridSpec = field(default_factory=GridSpec)
    fit: FitConfig = field(default_factory=FitConfig)
    train_fraction: float = 0.8
    out: str = "out"
    horizon: Optional[int] = None
    open: Optional[float] = None
    date: str = "next"
    jobs: int = 1

    @property
    def predictor(self) -> PredictorConfig:
        return PredictorConfig(latency_days=self.latency, grid=self.grid, jobs=self.jobs)

    def model_path(self) -> Path:
        return Path(self.out) / f"{self.symbol}.{self.method.value}.model"

    def train_log_path(self) -> Path:
        return Path(self.out) / f"{self.symbol}.{self.method.value}.train.json"


# flag/config key -> (RunConfig target, converter)
_SCALARS = {
    "data": ("data", str),
    "symbol": ("symbol", str),
    "method": ("method", Method),
    "states": ("n_states", int),
    "latency": ("latency", int),
    "train_frac": ("train_fraction", float),
    "out": ("out", str),
    "horizon": ("horizon", int),
    "open": ("open", float),
    "date": ("date", str),
    "jobs": ("jobs", int),
}
_FIT = {"max_iter": ("max_iterations", int), "tol": ("tolerance", float),
        "seed": ("seed", int), "reg_floor": ("regularization_floor", float)}
_GRID = {f"grid_{name}": (name, int if name.endswith("steps") else float) for name in GRID_FIELDS}


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArgumentError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_").lower()] = value
    return values


def build_run_config(overrides: dict) -> RunConfig:
    """Apply raw ``{key: value}`` overrides (config-file or flag names) to the defaults."""
    cfg = RunConfig()
    fit_kwargs, grid_kwargs = {}, {}
    for key, value in overrides.items():
        if value is None:
            continue
        try:
            if key in _SCALARS:
                target, conv = _SCALARS[key]
                setattr(cfg, target, conv(value))
            elif key in _FIT:
                target, conv = _FIT[key]
                fit_kwargs[target] = conv(value)
            elif key in _GRID:
                target, conv = _GRID[key]
                grid_kwargs[target] = conv(value)
            else:
                raise ArgumentError(f"unknown setting {key!r}")
        except ValueError as exc:
            if isinstance(exc, ArgumentError):
                raise
            raise ArgumentError(f"bad value for {key}: {value!r}") from exc
    cfg.fit = FitConfig(**fit_kwargs)
    cfg.grid = GridSpec(**grid_kwargs)
    cfg.predictor  # validates latency/jobs
    if not 0 < cfg.train_fraction < 1:
        raise ArgumentError("--train-frac must lie in (0, 1)")
    if cfg.n_states < 1:
        raise ArgumentError("--states must be >= 1")
    return cfg


def _require(cfg: RunConfig, *names):
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise ArgumentError("missing required setting(s): " + ", ".join("--" + m for m in missing))


def _load_clean(cfg: RunConfig) -> SymbolSeries:
    _require(cfg, "data", "symbol")
    series = clean(load_symbol(cfg.data, cfg.symbol))
    logger.info("%s: %d clean bars", cfg.symbol, len(series))
    return series


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=False))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_ingest(cfg: RunConfig) -> dict:
    _require(cfg, "data")
    all_series = load_json_archive(cfg.data)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for s in all_series:
        write_csv(s, out / f"{s.symbol.replace('/', '_')}.csv")
        manifest.append({
            "symbol": s.symbol,
            "rows": len(s),
            "skipped": s.skipped,
            "first_date": s.bars[0].date.isoformat() if s.bars else "",
            "last_date": s.bars[-1].date.isoformat() if s.bars else "",
        })
    with open(out / "manifest.csv", "w", encoding="utf-8") as fh:
        fh.write("symbol,rows,skipped,first_date,last_date\n")
        for m in manifest:
            fh.write(f"{m['symbol']},{m['rows']},{m['skipped']},{m['first_date']},{m['last_date']}\n")
    totals = {
        "symbols": len(manifest),
        "rows": sum(m["rows"] for m in manifest),
        "skipped": sum(m["skipped"] for m in manifest),
    }
    logger.info("ingested %(symbols)d symbols, %(rows)d rows (%(skipped)d skipped)", totals)
    return totals


def cmd_train(cfg: RunConfig) -> dict:
    split = chronological_split(_load_clean(cfg), cfg.train_fraction)
    train = split.train
    logger.info("training %s on %d bars (%s)", cfg.method.value, len(train), cfg.symbol)
    if cfg.method is Method.MAP_FRACTIONAL:
        model, report = fit_baum_welch(fractional_features(train).values, cfg.n_states, cfg.fit)
    else:
        fluct = fit_fluct(train, cfg.n_states, cfg.fit)
        model, report = fluct.hmm, fluct.report
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    meta = {
        "symbol": cfg.symbol,
        "method": cfg.method.value,
        "train_fraction": cfg.train_fraction,
        "train_bars": len(train),
        "train_last_date": train.bars[-1].date.isoformat(),
    }
    save_model(cfg.model_path(), model, cfg.fit, meta)
    log = {
        "iterations": report.iterations_run,
        "final_log_likelihood": report.final_log_likelihood,
        "converged": report.converged,
        "warnings": report.warnings,
        "log_likelihood_trace": report.log_likelihood_trace,
    }
    cfg.train_log_path().write_text(json.dumps(log, indent=2) + "\n", encoding="utf-8")
    for w in report.warnings:
        logger.warning("%s: %s", cfg.symbol, w)
    return {"model": str(cfg.model_path()), **{k: log[k] for k in ("iterations", "final_log_likelihood", "converged")}}


def _load_trained(cfg: RunConfig) -> GaussianHmm:
    path = cfg.model_path()
    if not path.exists():
        raise FileNotFoundError(
            f"no trained model at {path}; run `hmm-forecast train` with the same "
            f"--symbol/--method/--out first"
        )
    return load_model(path)


def cmd_backtest(cfg: RunConfig) -> dict:
    model = _load_trained(cfg)
    series = _load_clean(cfg)
    split = chronological_split(series, cfg.train_fraction)
    n_test = len(split.test)
    horizon = n_test if cfg.horizon is None else cfg.horizon
    if not 0 <= horizon <= n_test:
        raise ArgumentError(f"--horizon must lie in [0, {n_test}] (size of the test split)")
    start = len(series) - horizon
    logger.info("backtesting %s over %d days", cfg.method.value, horizon)
    if cfg.method is Method.MAP_FRACTIONAL:
        forecasts = rolling_forecast(model, series, start, horizon, cfg.predictor)
    else:
        fluct = FluctModel(model, series.bars[start - 1].close, model.start_prob)
        forecasts = rolling_forecast_fluct(fluct, series, start, horizon)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if not forecasts:
        write_forecasts_csv([], out / f"{cfg.symbol}.{cfg.method.value}.forecasts.csv", method=cfg.method.value)
    report = build_report(forecasts, cfg.symbol, cfg.method)
    paths = write_report(report, out)
    return {**report.summary(), **{k: str(v) for k, v in paths.items()}}


def cmd_predict(cfg: RunConfig) -> dict:
    model = _load_trained(cfg)
    series = _load_clean(cfg)
    if cfg.date == "next":
        history, target, open_price = series, None, cfg.open
    else:
        try:
            target = dt.date.fromisoformat(cfg.date)
        except ValueError as exc:
            raise ArgumentError(f"--date must be YYYY-MM-DD or 'next', got {cfg.date!r}") from exc
        history = SymbolSeries(series.symbol, [b for b in series.bars if b.date < target])
        on_day = [b for b in series.bars if b.date == target]
        open_price = cfg.open if cfg.open is not None else (on_day[0].open if on_day else None)
    if len(history) == 0:
        raise DataError("no history before the target date")

    result = {"symbol": cfg.symbol, "method": cfg.method.value,
              "date": target.isoformat() if target else "next"}
    if cfg.method is Method.MAP_FRACTIONAL:
        if open_price is None:
            raise ArgumentError("the target day's open price is required: pass --open")
        f = predict_close(model, history, open_price, cfg.predictor, date=target)
        result.update(open=f.open, predicted_close=f.predicted_close,
                      frac_change=f.frac_change, log_likelihood=f.log_likelihood)
    else:
        fluct = FluctModel(model, history.bars[-1].close, model.start_prob).conditioned_on(history)
        result.update(prev_close=fluct.last_close, expected_delta=predict_next_delta(fluct),
                      predicted_close=predict_close_fluct(fluct, fluct.last_close))
    return result


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "backtest": cmd_backtest,
    "predict": cmd_predict,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hmm-forecast",
        description="Gaussian-HMM next-day closing price forecasts.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="file of key = value settings (flags override it)")
    parser.add_argument("--data", help="JSON archive, ingested CSV directory, or CSV file")
    parser.add_argument("--symbol")
    parser.add_argument("--method", choices=[m.value for m in Method])
    parser.add_argument("--states", type=int, help="number of hidden states (default 4)")
    parser.add_argument("--latency", type=int, help="days of history per forecast (default 30)")
    for name in GRID_FIELDS:
        parser.add_argument(f"--grid-{name.replace('_', '-')}", dest=f"grid_{name}",
                            type=int if name.endswith("steps") else float)
    parser.add_argument("--max-iter", type=int, help="EM iteration cap (default 10000)")
    parser.add_argument("--tol", type=float, help="EM convergence threshold (default 0.001)")
    parser.add_argument("--reg-floor", type=float, help="covariance eigenvalue floor (default 1e-6)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--train-frac", type=float, help="chronological train share (default 0.8)")
    parser.add_argument("--horizon", type=int, help="backtest the last N days of the test split")
    parser.add_argument("--date", help="predict: target date YYYY-MM-DD or 'next'")
    parser.add_argument("--open", type=float, help="predict: the target day's open price")
    parser.add_argument("--out", help="output directory (default ./out)")
    parser.add_argument("--jobs", type=int, help="threads for grid scoring")
    parser.add_argument("-q", "--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        settings = read_config_file(args.config) if args.config else {}
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "quiet")}
        settings.update({k: v for k, v in flags.items() if v is not None})
        cfg = build_run_config(settings)
        _emit(COMMANDS[args.command](cfg))
        return EXIT_OK
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HmmForecastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
