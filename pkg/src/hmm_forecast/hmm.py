"""Gaussian-emission hidden Markov model.

All probability arithmetic happens in log space. A forward step combines the
previous log-alpha row with the transition matrix through a max-shifted
log-sum-exp, so long sequences never underflow and no per-step scaling
factors are needed.

Fitting is Baum-Welch (EM). The covariance update is the exact maximiser of
the expected complete-data log-likelihood subject to
``Sigma_j >= floor * I``, obtained by clipping the eigenvalues of the
weighted scatter matrix. Because every M-step is an exact (constrained)
maximiser, the likelihood trace is non-decreasing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import ArgumentError, InsufficientDataError, NumericError

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
STOCHASTIC_ATOL = 1e-8
# below this total responsibility a state keeps its previous emission parameters
_MIN_WEIGHT = 1e-12


@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 10000
    tolerance: float = 1e-3
    regularization_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ArgumentError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ArgumentError("tolerance must be > 0")
        if not self.regularization_floor > 0:
            raise ArgumentError("regularization_floor must be > 0")


@dataclass
class FitReport:
    iterations_run: int
    log_likelihood_trace: list[float]
    converged: bool
    warnings: list[str] = field(default_factory=list)

    @property
    def final_log_likelihood(self) -> float:
        return self.log_likelihood_trace[-1]


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianHmm:
    """HMM with one full-covariance Gaussian per hidden state.

    Parameters
    ----------
    start_prob : (n,) array
        Initial state distribution.
    transition : (n, n) array
        Row-stochastic transition matrix, ``transition[i, j] = P(j | i)``.
    means : (n, D) array
    covariances : (n, D, D) array
        Symmetric positive-definite emission covariances.

    Arrays are copied and frozen on construction; a model is immutable and
    safe to share between threads.
    """

    start_prob: np.ndarray
    transition: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        for name in ("start_prob", "transition", "means", "covariances"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        check_parameters(self.start_prob, self.transition, self.means, self.covariances)

    @property
    def n_states(self) -> int:
        return self.start_prob.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @cached_property
    def cholesky_factors(self) -> np.ndarray:
        return np.stack([_cholesky(c, state=j) for j, c in enumerate(self.covariances)])

    @cached_property
    def log_start(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.start_prob)

    @cached_property
    def log_transition(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.transition)

    def log_emissions(self, observations) -> np.ndarray:
        """``(T, n)`` matrix of ``log b_j(O_t)``."""
        X = as_observation_matrix(observations, self.dim)
        out = np.empty((X.shape[0], self.n_states))
        for j in range(self.n_states):
            out[:, j] = _log_density_chol(X, self.means[j], self.cholesky_factors[j])
        return out

    def equals(self, other: "GaussianHmm") -> bool:
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("start_prob", "transition", "means", "covariances")
        )


def check_parameters(start_prob, transition, means, covariances) -> None:
    """Raise ``ArgumentError`` naming the first violated model invariant."""
    if start_prob.ndim != 1 or start_prob.size == 0:
        raise ArgumentError("start_prob must be a non-empty vector")
    n = start_prob.shape[0]
    if transition.shape != (n, n):
        raise ArgumentError(f"transition must have shape ({n}, {n}), got {transition.shape}")
    if means.ndim != 2 or means.shape[0] != n or means.shape[1] == 0:
        raise ArgumentError(f"means must have shape ({n}, D), got {means.shape}")
    d = means.shape[1]
    if covariances.shape != (n, d, d):
        raise ArgumentError(f"covariances must have shape ({n}, {d}, {d}), got {covariances.shape}")
    for name, arr in (("start_prob", start_prob), ("transition", transition),
                      ("means", means), ("covariances", covariances)):
        if not np.all(np.isfinite(arr)):
            raise ArgumentError(f"{name} contains non-finite values")
    if np.any(start_prob < 0) or abs(start_prob.sum() - 1.0) > STOCHASTIC_ATOL:
        raise ArgumentError("start_prob must be a probability vector (non-negative, sums to 1)")
    if np.any(transition < 0):
        raise ArgumentError("transition must be row-stochastic (negative entry)")
    bad = np.flatnonzero(np.abs(transition.sum(axis=1) - 1.0) > STOCHASTIC_ATOL)
    if bad.size:
        raise ArgumentError(
            f"transition must be row-stochastic: row {bad[0]} sums to {transition[bad[0]].sum():.17g}"
        )
    for j, c in enumerate(covariances):
        if not np.allclose(c, c.T, rtol=1e-10, atol=1e-14):
            raise ArgumentError(f"covariance of state {j} is not symmetric")
        _cholesky(c, state=j)


def _cholesky(cov, state=None) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericError("covariance is not positive definite", state=state) from exc


def _log_density_chol(X: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    z = solve_triangular(chol, (X - mean).T, lower=True, check_finite=False)
    maha = np.einsum("ij,ij->j", z, z)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (X.shape[1] * LOG_2PI + log_det + maha)


def log_gaussian_density(x, mean, covariance):
    """Log of the multivariate normal density ``N(x; mean, covariance)``.

    ``x`` may be a single vector of length D (returns a float) or an (N, D)
    array (returns N values).
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != mean.shape[0] or covariance.shape != (mean.shape[0],) * 2:
        raise ArgumentError("dimension mismatch between x, mean and covariance")
    out = _log_density_chol(X, mean, _cholesky(covariance))
    return float(out[0]) if single else out


def as_observation_matrix(observations, dim: int) -> np.ndarray:
    X = np.asarray(observations, dtype=float)
    if X.ndim == 1 and dim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ArgumentError(f"observations must be a (T, {dim}) array, got shape {X.shape}")
    if X.shape[1] != dim:
        raise ArgumentError(f"observation dimension {X.shape[1]} does not match model dimension {dim}")
    return X


def propagate(log_alpha: np.ndarray, transition: np.ndarray) -> np.ndarray:
    """``log sum_i exp(log_alpha_i) * A[i, j]`` for every ``j``.

    This is a log-sum-exp over ``log_alpha_i + log A_ij`` with the maximum of
    ``log_alpha`` factored out.
    """
    m = log_alpha.max()
    if m == -np.inf:
        return np.full(transition.shape[1], -np.inf)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(log_alpha - m) @ transition) + m


def _forward(log_start, transition, log_b) -> np.ndarray:
    T, n = log_b.shape
    log_alpha = np.empty((T, n))
    log_alpha[0] = log_start + log_b[0]
    exp, log = np.exp, np.log
    with np.errstate(divide="ignore", invalid="ignore"):
        for t in range(1, T):
            prev = log_alpha[t - 1]
            m = prev.max()
            # m is finite: emission log-densities are finite and some start_prob > 0
            log_alpha[t] = log(exp(prev - m) @ transition) + (m + log_b[t])
    return log_alpha


def _backward(transition, log_b) -> np.ndarray:
    T, n = log_b.shape
    log_beta = np.zeros((T, n))
    exp, log = np.exp, np.log
    with np.errstate(divide="ignore", invalid="ignore"):
        for t in range(T - 2, -1, -1):
            v = log_b[t + 1] + log_beta[t + 1]
            m = v.max()
            log_beta[t] = log(transition @ exp(v - m)) + m
    return log_beta


def forward_pass(model: GaussianHmm, observations) -> tuple[np.ndarray, float]:
    """Return the ``(T, n)`` log-alpha matrix and the total log-likelihood."""
    X = as_observation_matrix(observations, model.dim)
    if X.shape[0] == 0:
        raise ArgumentError("observation sequence is empty")
    log_alpha = _forward(model.log_start, model.transition, model.log_emissions(X))
    return log_alpha, float(logsumexp(log_alpha[-1]))


def forward_log_likelihood(model: GaussianHmm, observations) -> float:
    """``log P(O_1..O_T | model)`` via the forward recursion."""
    return forward_pass(model, observations)[1]


def filter_posterior(model: GaussianHmm, observations) -> np.ndarray:
    """Filtered state distribution ``P(S_T | O_1..O_T)``; the start distribution if empty."""
    X = as_observation_matrix(observations, model.dim)
    if X.shape[0] == 0:
        return np.array(model.start_prob)
    log_alpha, total = forward_pass(model, X)
    post = np.exp(log_alpha[-1] - total)
    return post / post.sum()


def sample(model: GaussianHmm, length: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(states, observations)`` of the given length."""
    rng = np.random.default_rng(rng)
    states = np.empty(length, dtype=int)
    X = np.empty((length, model.dim))
    s = rng.choice(model.n_states, p=model.start_prob)
    for t in range(length):
        if t:
            s = rng.choice(model.n_states, p=model.transition[s])
        states[t] = s
        X[t] = model.means[s] + model.cholesky_factors[s] @ rng.standard_normal(model.dim)
    return states, X


# ---------------------------------------------------------------------------
# Baum-Welch
# ---------------------------------------------------------------------------

def floor_eigenvalues(scatter: np.ndarray, floor: float) -> np.ndarray:
    """Nearest covariance with every eigenvalue at least ``floor``.

    Clipping the spectrum is the exact maximiser of the Gaussian likelihood
    under the constraint ``Sigma >= floor * I``.
    """
    scatter = 0.5 * (scatter + scatter.T)
    w, V = np.linalg.eigh(scatter)
    if w[0] >= floor:
        return scatter
    out = (V * np.maximum(w, floor)) @ V.T
    return 0.5 * (out + out.T)


def _farthest_point_means(X: np.ndarray, n_states: int, rng) -> tuple[np.ndarray, bool]:
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = X / scale
    chosen = [int(rng.integers(X.shape[0]))]
    d2 = np.sum((Z - Z[chosen[0]]) ** 2, axis=1)
    degenerate = False
    for _ in range(1, n_states):
        nxt = int(np.argmax(d2))
        if d2[nxt] == 0.0:
            degenerate = True
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((Z - Z[nxt]) ** 2, axis=1))
    return X[chosen].copy(), degenerate


def initial_model(X: np.ndarray, n_states: int, config: FitConfig) -> tuple[GaussianHmm, list[str]]:
    """Uniform start/transition, farthest-point seeded means, pooled covariance."""
    rng = np.random.default_rng(config.seed)
    notes = []
    means, degenerate = _farthest_point_means(X, n_states, rng)
    if degenerate:
        notes.append(f"fewer than {n_states} distinct observations; some initial means coincide")
    pooled = np.atleast_2d(np.cov(X, rowvar=False, bias=True))
    cov = floor_eigenvalues(pooled, config.regularization_floor)
    model = GaussianHmm(
        start_prob=np.full(n_states, 1.0 / n_states),
        transition=np.full((n_states, n_states), 1.0 / n_states),
        means=means,
        covariances=np.repeat(cov[None], n_states, axis=0),
    )
    return model, notes


@dataclass
class _Statistics:
    log_likelihood: float
    gamma: np.ndarray  # (T, n) state posteriors
    xi_sum: np.ndarray  # (n, n) expected transition counts


def _e_step(model: GaussianHmm, X: np.ndarray) -> _Statistics:
    log_b = model.log_emissions(X)
    log_alpha = _forward(model.log_start, model.transition, log_b)
    log_beta = _backward(model.transition, log_b)
    ll = float(logsumexp(log_alpha[-1]))
    if not math.isfinite(ll):
        raise NumericError(f"log-likelihood is not finite ({ll})")
    gamma = np.exp(log_alpha + log_beta - ll)
    gamma /= gamma.sum(axis=1, keepdims=True)
    if X.shape[0] > 1:
        log_xi = (
            log_alpha[:-1, :, None]
            + model.log_transition[None, :, :]
            + (log_b[1:] + log_beta[1:])[:, None, :]
            - ll
        )
        xi_sum = np.exp(log_xi).sum(axis=0)
    else:
        xi_sum = np.zeros((model.n_states, model.n_states))
    return _Statistics(ll, gamma, xi_sum)


def _m_step(X: np.ndarray, stats: _Statistics, prev: GaussianHmm, floor: float) -> GaussianHmm:
    start = stats.gamma[0] / stats.gamma[0].sum()

    transition = np.array(prev.transition)
    counts = stats.xi_sum.sum(axis=1)
    used = counts > _MIN_WEIGHT
    transition[used] = stats.xi_sum[used] / counts[used, None]
    transition /= transition.sum(axis=1, keepdims=True)

    means = np.array(prev.means)
    covariances = np.array(prev.covariances)
    weights = stats.gamma.sum(axis=0)
    for j in np.flatnonzero(weights > _MIN_WEIGHT):
        g = stats.gamma[:, j]
        mu = g @ X / weights[j]
        diff = X - mu
        scatter = (g[:, None] * diff).T @ diff / weights[j]
        means[j] = mu
        covariances[j] = floor_eigenvalues(scatter, floor)
    return GaussianHmm(start, transition, means, covariances)


def fit_baum_welch(
    observations,
    n_states: int,
    config: Optional[FitConfig] = None,
    callback: Optional[Callable[[int, GaussianHmm, float], None]] = None,
) -> tuple[GaussianHmm, FitReport]:
    """Fit a Gaussian HMM by expectation-maximisation.

    Parameters
    ----------
    observations : (T, D) array
    n_states : int
    config : FitConfig, optional
    callback : callable, optional
        Called as ``callback(iteration, model, log_likelihood)`` after every
        M-step with the updated model and its log-likelihood.

    Returns
    -------
    model, report
        ``report.log_likelihood_trace[0]`` scores the initial model and
        ``trace[k]`` the model after iteration ``k``; the last entry is the
        log-likelihood of the returned model. Iteration stops once the
        absolute change drops below ``config.tolerance``.
    """
    config = config or FitConfig()
    if n_states < 1:
        raise ArgumentError("n_states must be >= 1")
    X = np.asarray(observations, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ArgumentError(f"observations must be a (T, D) array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ArgumentError("observations contain non-finite values")
    if X.shape[0] < n_states:
        raise InsufficientDataError(
            f"need at least {n_states} observations for {n_states} states, have {X.shape[0]}"
        )

    model, notes = initial_model(X, n_states, config)
    flat = np.flatnonzero(X.std(axis=0) == 0)
    if flat.size:
        notes.append(
            f"zero variance in dimension(s) {flat.tolist()}; covariances held at the regularization floor"
        )
    for note in notes:
        logger.warning(note)

    stats = _e_step(model, X)
    trace = [stats.log_likelihood]
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iterations + 1):
        model = _m_step(X, stats, model, config.regularization_floor)
        stats = _e_step(model, X)
        trace.append(stats.log_likelihood)
        if callback is not None:
            callback(iteration, model, stats.log_likelihood)
        logger.debug("iteration %d: log-likelihood %.6f", iteration, stats.log_likelihood)
        if abs(trace[-1] - trace[-2]) < config.tolerance:
            converged = True
            break
    return model, FitReport(iteration, trace, converged, notes)
