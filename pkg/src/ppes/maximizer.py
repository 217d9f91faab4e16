"""Approximate sampling from the posterior over the global maximizer.

Two samplers share one interface: a MAP point estimate (argmax of the
posterior mean) and draws from a random-feature linear model whose Bochner
spectral features approximate the squared-exponential kernel.  A sampled
feature model is an explicit function, so its argmax is a draw from an
approximation to p(x*|data).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import Dataset, Domain, GpHyper, chol_with_jitter, kernel
from .optim import batch_ascent

MAP = "MAP"
RANDOM_FEATURE = "RANDOM_FEATURE"


@dataclass(frozen=True)
class RandomFeatureModel:
    """Linear model g(x) = phi(x)'weights + mean_offset with cosine features
    phi_j(x) = sqrt(2 amp_norm / m) cos(freq_j . x + phase_j)."""

    freq: np.ndarray
    phase: np.ndarray
    amp_norm: float
    weights: np.ndarray
    mean_offset: float

    @property
    def m(self) -> int:
        return self.phase.size

    def features(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.sqrt(2.0 * self.amp_norm / self.m) * np.cos(X @ self.freq.T + self.phase)

    def value(self, X: np.ndarray) -> np.ndarray:
        return self.features(X) @ self.weights + self.mean_offset

    def grad(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        S = np.sin(X @ self.freq.T + self.phase) * self.weights
        return -np.sqrt(2.0 * self.amp_norm / self.m) * (S @ self.freq)


@dataclass(frozen=True)
class MaximizerSample:
    hyper: GpHyper
    x_star: np.ndarray
    source: str


def draw_feature_model(
    data: Dataset, hyper: GpHyper, m: int, rng: np.random.Generator
) -> RandomFeatureModel:
    """Draw a random-feature model from its exact weight posterior.

    Frequencies follow the SE kernel's spectral density, phases are uniform,
    and the weight posterior is Gaussian with mean A^-1 Phi'(y - mean) and
    covariance noise_var * A^-1 where A = Phi'Phi + noise_var I.  With no
    data the weights come from the standard normal prior.
    """
    if m < 1:
        raise ValueError("need at least one feature")
    D = hyper.dim
    W = rng.standard_normal((m, D)) / hyper.lengthscales
    b = rng.uniform(0.0, 2.0 * np.pi, m)
    model = RandomFeatureModel(W, b, hyper.signal_var, np.zeros(m), hyper.mean)
    z = rng.standard_normal(m)
    if data.n == 0:
        theta = z
    else:
        Phi = model.features(data.X)
        A = Phi.T @ Phi + hyper.noise_var * np.eye(m)
        L, _ = chol_with_jitter(A)
        mean_t = np.linalg.solve(
            L.T, np.linalg.solve(L, Phi.T @ (data.y - hyper.mean))
        )
        theta = mean_t + np.sqrt(hyper.noise_var) * np.linalg.solve(L.T, z)
    return RandomFeatureModel(W, b, hyper.signal_var, theta, hyper.mean)


def sample_maximizer_rf(
    data: Dataset,
    hyper: GpHyper,
    domain: Domain,
    m: int,
    rng: np.random.Generator,
    n_starts: int = 20,
) -> np.ndarray:
    """One draw from the random-feature approximation to p(x*|data): sample a
    feature model and return its argmax over the domain."""
    model = draw_feature_model(data, hyper, m, rng)

    def fg(X):
        return model.value(X), model.grad(X)

    starts = domain.uniform(rng, n_starts)
    X, v = batch_ascent(fg, starts, domain)
    return X[int(np.argmax(v))].copy()


def map_maximizer(
    data: Dataset,
    hyper: GpHyper,
    domain: Domain,
    rng: np.random.Generator,
    n_starts: int = 20,
) -> np.ndarray:
    """Argmax of the posterior mean via multi-start projected gradient ascent.

    With no data the posterior mean is constant; the domain center is
    returned as the documented degenerate case.
    """
    if data.n == 0:
        return 0.5 * (domain.lower + domain.upper)
    Kdd = kernel(hyper, data.X, data.X) + hyper.noise_var * np.eye(data.n)
    L, _ = chol_with_jitter(Kdd)
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, data.y - hyper.mean))
    inv_l2 = 1.0 / hyper.lengthscales**2

    def fg(X):
        Kxd = kernel(hyper, X, data.X)
        E = Kxd * alpha
        mu = hyper.mean + E.sum(axis=1)
        grad = -(X * E.sum(axis=1)[:, None] - E @ data.X) * inv_l2
        return mu, grad

    starts = domain.uniform(rng, n_starts)
    X, v = batch_ascent(fg, starts, domain)
    return X[int(np.argmax(v))].copy()
