"""Synthetic fixtures shared by several test modules."""

import datetime as dt
import itertools
import math

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from hmm_forecast.hmm import GaussianHmm
from hmm_forecast.market_data import StockBar, SymbolSeries


def random_walk_series(n_days, seed=0, max_change=0.02, start_price=200.0, symbol="SYN"):
    """Geometric random walk with |(close - open) / open| <= max_change."""
    rng = np.random.default_rng(seed)
    bars = []
    price = start_price
    day = dt.date(2015, 1, 1)
    for _ in range(n_days):
        open_ = price * (1.0 + rng.uniform(-0.003, 0.003))
        change = float(np.clip(rng.normal(0.0, max_change / 3.0), -max_change, max_change))
        close = open_ * (1.0 + change)
        high = max(open_, close) * (1.0 + rng.uniform(0.0, 0.01))
        low = min(open_, close) * (1.0 - rng.uniform(0.0, 0.01))
        bars.append(StockBar(day, open_, high, low, close, int(rng.integers(1_000, 500_000))))
        price = close
        day += dt.timedelta(days=1)
    return SymbolSeries(symbol, bars)


def write_series_csv(series, path):
    lines = ["date,open,high,low,close,volume"]
    for b in series.bars:
        lines.append(f"{b.date.isoformat()},{b.open!r},{b.high!r},{b.low!r},{b.close!r},{b.volume}")
    path.write_text("\n".join(lines) + "\n")
    return path


def random_model(rng, n, d, spread=1.0):
    start = rng.dirichlet(np.ones(n))
    trans = rng.dirichlet(np.ones(n), size=n)
    means = rng.normal(0.0, spread, size=(n, d))
    covs = []
    for _ in range(n):
        m = rng.normal(size=(d, d))
        covs.append(m @ m.T + 0.5 * np.eye(d))
    return GaussianHmm(start, trans, means, np.array(covs))


def brute_force_log_likelihood(model, X):
    """log sum over every state path of P(path, X), scored with scipy densities."""
    X = np.atleast_2d(X)
    T, n = len(X), model.n_states
    log_b = np.column_stack([
        multivariate_normal(model.means[j], model.covariances[j]).logpdf(X).reshape(T)
        for j in range(n)
    ])
    with np.errstate(divide="ignore"):
        log_pi, log_a = np.log(model.start_prob), np.log(model.transition)
    terms = []
    for path in itertools.product(range(n), repeat=T):
        lp = log_pi[path[0]] + log_b[0, path[0]]
        for t in range(1, T):
            lp += log_a[path[t - 1], path[t]] + log_b[t, path[t]]
        terms.append(lp)
    return float(logsumexp(terms))


def best_permutation(estimated_means, true_means):
    """State permutation minimising the largest mean error."""
    n = len(true_means)
    best = None
    for perm in itertools.permutations(range(n)):
        err = max(np.max(np.abs(estimated_means[list(perm)][k] - true_means[k])) for k in range(n))
        if best is None or err < best[0]:
            best = (err, list(perm))
    return best[1]


def finite(x):
    return math.isfinite(float(x))
