"""Gaussian process core: ARD squared-exponential kernel, exact posterior
predictives, marginal likelihood, and slice-sampled hyperparameter posteriors.

All models use a constant mean and homoscedastic Gaussian observation noise.
Inputs live in a box domain, by convention the unit hypercube.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box of search inputs."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower/upper must be 1-D arrays of equal length")
        if not np.all(self.upper > self.lower):
            raise ValueError("upper must exceed lower in every coordinate")

    @property
    def dim(self) -> int:
        return self.lower.size

    def clip(self, X: np.ndarray) -> np.ndarray:
        return np.clip(X, self.lower, self.upper)

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))


def unit_domain(dim: int) -> Domain:
    return Domain(np.zeros(dim), np.ones(dim))


@dataclass
class Dataset:
    """Observed inputs X (n, D) and noisy outputs y (n,)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.size:
            raise ValueError("X and y disagree on the number of points")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def y_max(self) -> float:
        return float(np.max(self.y)) if self.n else -np.inf

    def extended(self, X_new: np.ndarray, y_new: np.ndarray) -> "Dataset":
        X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
        y_new = np.asarray(y_new, dtype=float).ravel()
        if self.n == 0:
            return Dataset(X_new, y_new)
        return Dataset(np.vstack([self.X, X_new]), np.concatenate([self.y, y_new]))


def empty_dataset(dim: int) -> Dataset:
    return Dataset(np.empty((0, dim)), np.empty(0))


@dataclass(frozen=True)
class GpHyper:
    """Kernel and likelihood hyperparameters.

    ``lengthscales`` holds the per-dimension scales l_d (not their squares);
    ``signal_var`` and ``noise_var`` are variances.
    """

    signal_var: float
    lengthscales: np.ndarray
    noise_var: float
    mean: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "lengthscales", np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        )
        if self.signal_var <= 0 or self.noise_var <= 0 or np.any(self.lengthscales <= 0):
            raise ValueError("variances and lengthscales must be positive")

    @property
    def dim(self) -> int:
        return self.lengthscales.size


@dataclass(frozen=True)
class MvnPredictive:
    """Joint Gaussian over latent function values at a set of query points."""

    mean: np.ndarray
    cov: np.ndarray

    def marginal_sd(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))


HyperPosteriorSamples = list  # list[GpHyper]


# ---------------------------------------------------------------------------
# Kernel


def kernel(hyper: GpHyper, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """ARD squared-exponential cross-covariance between rows of A and B."""
    A = np.atleast_2d(A) / hyper.lengthscales
    B = np.atleast_2d(B) / hyper.lengthscales
    sq = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * (A @ B.T)
    return hyper.signal_var * np.exp(-0.5 * np.clip(sq, 0.0, None))


def kernel_grad_first(hyper: GpHyper, x: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Gradient of k(x, b) with respect to x, one row per b in B: (|B|, D)."""
    B = np.atleast_2d(B)
    k = kernel(hyper, x[None, :], B).ravel()
    return -k[:, None] * (x[None, :] - B) / hyper.lengthscales**2


def chol_with_jitter(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, adding escalating diagonal jitter when needed.

    Jitter starts at 1e-10 times the mean diagonal and grows tenfold up to
    1e-4 times the mean diagonal before giving up.
    """
    K = np.asarray(K, dtype=float)
    scale = float(np.mean(np.diag(K))) if K.size else 1.0
    if scale <= 0:
        scale = 1.0
    jitter = 0.0
    for _ in range(8):
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(K.shape[0]))
            return L, jitter
        except np.linalg.LinAlgError:
            jitter = 1e-10 * scale if jitter == 0.0 else jitter * 10.0
            if jitter > 1e-4 * scale:
                break
    raise np.linalg.LinAlgError(
        f"covariance not positive definite after jitter escalation to {jitter:.1e}"
    )


# ---------------------------------------------------------------------------
# Exact GP posterior


def posterior_predictive(data: Dataset, hyper: GpHyper, Xq: np.ndarray) -> MvnPredictive:
    """Joint posterior over latent f at query rows Xq given noisy data."""
    Xq = np.atleast_2d(Xq)
    Kqq = kernel(hyper, Xq, Xq)
    if data.n == 0:
        return MvnPredictive(np.full(Xq.shape[0], hyper.mean), Kqq)
    Kdd = kernel(hyper, data.X, data.X) + hyper.noise_var * np.eye(data.n)
    Kqd = kernel(hyper, Xq, data.X)
    L, _ = chol_with_jitter(Kdd)
    alpha = _chol_solve(L, data.y - hyper.mean)
    V = np.linalg.solve(L, Kqd.T)
    mean = hyper.mean + Kqd @ alpha
    cov = Kqq - V.T @ V
    return MvnPredictive(mean, 0.5 * (cov + cov.T))


def _chol_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.solve(L.T, np.linalg.solve(L, b))


def log_marginal_likelihood(data: Dataset, hyper: GpHyper) -> float:
    """Log evidence of the noisy observations under the GP prior."""
    if data.n == 0:
        return 0.0
    Kdd = kernel(hyper, data.X, data.X) + hyper.noise_var * np.eye(data.n)
    L, _ = chol_with_jitter(Kdd)
    r = data.y - hyper.mean
    alpha = _chol_solve(L, r)
    return float(
        -0.5 * r @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * data.n * math.log(2.0 * math.pi)
    )


# ---------------------------------------------------------------------------
# Hyperparameter posterior via slice sampling

_GAMMA_SHAPE = 1.5
_GAMMA_RATE = 0.5


def _log_posterior(theta: np.ndarray, data: Dataset, mean_prior: tuple[float, float]) -> float:
    """Unnormalized log posterior over theta = [mean, log sv, log l_1.., log nv]."""
    mean = theta[0]
    log_pos = theta[1:]
    if np.any(np.abs(log_pos) > 20.0):
        return -np.inf
    pos = np.exp(log_pos)
    hyper = GpHyper(
        signal_var=pos[0], lengthscales=pos[1:-1], noise_var=pos[-1], mean=mean
    )
    try:
        ll = log_marginal_likelihood(data, hyper)
    except np.linalg.LinAlgError:
        return -np.inf
    # Gamma prior on each positive parameter plus the log-space Jacobian.
    lp = np.sum(_GAMMA_SHAPE * log_pos - _GAMMA_RATE * pos)
    lp += stats.norm.logpdf(mean, mean_prior[0], mean_prior[1])
    return float(ll + lp)


def _slice_sweep(theta, logp, log_y_cache, widths, rng, max_steps=60):
    """One coordinate-wise slice-sampling sweep; returns updated (theta, logp(theta))."""
    lp = log_y_cache
    for i in range(theta.size):
        w = widths[i]
        height = lp - rng.exponential()
        lo = theta[i] - w * rng.uniform()
        hi = lo + w
        x0 = theta[i]

        def lp_at(v):
            theta[i] = v
            return logp(theta)

        steps = max_steps
        while steps > 0 and lp_at(lo) > height:
            lo -= w
            steps -= 1
        steps = max_steps
        while steps > 0 and lp_at(hi) > height:
            hi += w
            steps -= 1
        while True:
            prop = rng.uniform(lo, hi)
            lp_prop = lp_at(prop)
            if lp_prop > height:
                lp = lp_prop
                break
            if prop < x0:
                lo = prop
            else:
                hi = prop
            if hi - lo < 1e-12:
                theta[i] = x0
                lp = lp_at(x0)
                break
    return theta, lp


def sample_hyperparameters(
    data: Dataset,
    rng: np.random.Generator,
    n_samples: int,
    burn_in: int = 300,
    thin: int = 5,
    init: GpHyper | None = None,
) -> list[GpHyper]:
    """Draw hyperparameter samples from the posterior by slice sampling.

    Positive parameters (signal variance, lengthscales, noise variance) carry
    Gamma(1.5, rate 0.5) priors and are sampled in log space; the constant
    mean carries a Normal(mean(y), var(y) + 1) prior.  Passing ``init`` warm
    starts the chain, in which case a shorter burn-in is reasonable.
    """
    if data.n < 2:
        raise ValueError("hyperparameter sampling needs at least 2 observations")
    D = data.X.shape[1]
    mean_prior = (float(np.mean(data.y)), math.sqrt(float(np.var(data.y)) + 1.0))
    if init is None:
        theta = np.concatenate(
            [
                [mean_prior[0]],
                [math.log(max(float(np.var(data.y)), 1e-4))],
                np.log(np.full(D, 0.3)),
                [math.log(max(0.01 * float(np.var(data.y)), 1e-6))],
            ]
        )
    else:
        theta = np.concatenate(
            [
                [init.mean],
                [math.log(init.signal_var)],
                np.log(init.lengthscales),
                [math.log(init.noise_var)],
            ]
        )
    widths = np.concatenate([[max(mean_prior[1], 0.5)], np.full(D + 2, 1.0)])

    def logp(t):
        return _log_posterior(t, data, mean_prior)

    lp = logp(theta)
    if not np.isfinite(lp):
        raise ValueError("initial hyperparameter state has zero posterior density")
    for _ in range(burn_in):
        theta, lp = _slice_sweep(theta, logp, lp, widths, rng)
    out = []
    for _ in range(n_samples):
        for _ in range(thin):
            theta, lp = _slice_sweep(theta, logp, lp, widths, rng)
        pos = np.exp(theta[1:])
        out.append(
            GpHyper(
                signal_var=float(pos[0]),
                lengthscales=pos[1:-1].copy(),
                noise_var=float(pos[-1]),
                mean=float(theta[0]),
            )
        )
    return out
