"""Ground-truth batch information gain on a 1-D problem, for validating the
EP acquisition: sample GP posterior paths on a grid, classify them by argmax
(rejection sampling from p(x*|data)), and estimate conditional predictive
entropies for every grid pair by kernel density estimation.

The surface value at (x, x') is the analytic entropy of the noisy predictive
at the pair minus the argmax-weighted average of the KDE entropies of the
accepted paths, i.e. the mutual information between the pair's outcomes and
the location of the maximizer.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .gp import Dataset, GpHyper, chol_with_jitter, posterior_predictive

__all__ = [
    "GroundTruthSurface",
    "ground_truth_ppes",
    "kde_entropy_2d",
    "surface_bootstrap_se",
]

_LOG2PIE = np.log(2.0 * np.pi) + 1.0


@dataclass
class GroundTruthSurface:
    grid: np.ndarray  # (G,)
    values: np.ndarray  # (G, G)
    argmax_pair: tuple  # (x, x') at the surface maximum
    p_star: np.ndarray  # (G,) estimated maximizer distribution
    excluded: int  # grid points dropped for too few accepted paths
    excluded_mass: float

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "x_prime", "value"])
            for i, x in enumerate(self.grid):
                for j, xp in enumerate(self.grid):
                    w.writerow([f"{x:.10g}", f"{xp:.10g}", f"{self.values[i, j]:.10g}"])


def _silverman(train: np.ndarray) -> np.ndarray:
    """Per-axis bandwidths for a 2-D Gaussian product kernel."""
    n = train.shape[0]
    sd = np.std(train, axis=0, ddof=1)
    return np.maximum(sd, 1e-12) * n ** (-1.0 / 6.0)


def kde_entropy_2d(samples: np.ndarray, rng: np.random.Generator | None = None,
                   chunk: int = 2000) -> float:
    """Entropy estimate for 2-D samples: fit a product-kernel KDE with
    Silverman bandwidths on one half, average -log density over the other."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    if rng is not None:
        samples = samples[rng.permutation(n)]
    half = n // 2
    tr, ev = samples[:half], samples[half:]
    h = _silverman(tr)
    log_norm = np.log(half * 2.0 * np.pi * h[0] * h[1])
    acc = 0.0
    for lo in range(0, ev.shape[0], chunk):
        e = ev[lo : lo + chunk]
        E1 = np.exp(-0.5 * ((e[:, 0, None] - tr[None, :, 0]) / h[0]) ** 2)
        E2 = np.exp(-0.5 * ((e[:, 1, None] - tr[None, :, 1]) / h[1]) ** 2)
        dens = np.einsum("et,et->e", E1, E2)
        acc += np.sum(log_norm - np.log(np.maximum(dens, 1e-300)))
    return acc / ev.shape[0]


def _conditional_entropies(Y1: np.ndarray, Y2: np.ndarray) -> np.ndarray:
    """KDE entropy of (Y1[:, i], Y2[:, j]) for every grid pair (i, j).

    Y1/Y2 are (n, G) noisy path values with independent noise draws, so the
    diagonal pairs are genuine two-observation distributions.  Returns (G, G).
    """
    n, G = Y1.shape
    half = n // 2
    tr1, ev1 = Y1[:half], Y1[half:]
    tr2, ev2 = Y2[:half], Y2[half:]
    h1 = np.maximum(np.std(tr1, axis=0, ddof=1), 1e-12) * half ** (-1.0 / 6.0)
    h2 = np.maximum(np.std(tr2, axis=0, ddof=1), 1e-12) * half ** (-1.0 / 6.0)
    E1 = np.exp(-0.5 * ((ev1[:, :, None] - tr1.T[None, :, :]) / h1[None, :, None]) ** 2)
    E2 = np.exp(-0.5 * ((ev2[:, :, None] - tr2.T[None, :, :]) / h2[None, :, None]) ** 2)
    # dens[e, i, j] = sum_t E1[e, i, t] * E2[e, j, t]
    dens = np.einsum("eit,ejt->eij", E1, E2)
    log_norm = np.log(half * 2.0 * np.pi * np.outer(h1, h2))
    return np.mean(log_norm[None] - np.log(np.maximum(dens, 1e-300)), axis=0)


def _surface_from_paths(F, noise_sd, H1, rng, kde_cap, min_accept):
    n_paths, G = F.shape
    labels = np.argmax(F, axis=1)
    Hc = np.zeros((G, G))
    weight = np.zeros(G)
    excluded = 0
    excluded_mass = 0.0
    for g in range(G):
        idx = np.flatnonzero(labels == g)
        p_g = idx.size / n_paths
        if p_g == 0:
            continue
        if idx.size < min_accept:
            excluded += 1
            excluded_mass += p_g
            continue
        if idx.size > kde_cap:
            idx = idx[rng.choice(idx.size, kde_cap, replace=False)]
        vals = F[idx]
        Y1 = vals + noise_sd * rng.standard_normal(vals.shape)
        Y2 = vals + noise_sd * rng.standard_normal(vals.shape)
        Hc += p_g * _conditional_entropies(Y1, Y2)
        weight[g] = p_g
    total = weight.sum()
    if total <= 0:
        raise ValueError("no maximizer location kept enough accepted paths")
    values = H1 - Hc / total
    p_star = np.bincount(labels, minlength=G) / n_paths
    return values, p_star, excluded, excluded_mass


def ground_truth_ppes(
    data: Dataset,
    hyper: GpHyper,
    grid_n: int = 50,
    n_paths: int = 200_000,
    rng: np.random.Generator | None = None,
    kde_cap: int = 600,
    min_accept: int = 50,
) -> GroundTruthSurface:
    """Rejection-sampling estimate of the pairwise batch information gain on
    a uniform grid over [0, 1] (1-D inputs, batches of two).

    Maximizer locations whose accepted-path count falls below ``min_accept``
    are excluded and their probability mass renormalized away; the surface
    reports how many were dropped.
    """
    if data.X.shape[1] != 1:
        raise ValueError("ground truth surface is defined for 1-D inputs")
    if grid_n < 20 or n_paths < 10_000:
        raise ValueError("need grid_n >= 20 and n_paths >= 10000")
    if rng is None:
        rng = np.random.default_rng(0)
    grid = np.linspace(0.0, 1.0, grid_n)
    pred = posterior_predictive(data, hyper, grid[:, None])
    L, _ = chol_with_jitter(pred.cov)
    F = pred.mean[None, :] + rng.standard_normal((n_paths, grid_n)) @ L.T

    nv = hyper.noise_var
    var = np.clip(np.diag(pred.cov), 0.0, None) + nv
    det2 = var[:, None] * var[None, :] - pred.cov**2
    # Guard the diagonal: det of [[v+s, v], [v, v+s]] = s(2v + s).
    d = np.clip(np.diag(pred.cov), 0.0, None)
    np.fill_diagonal(det2, nv * (2.0 * d + nv))
    H1 = _LOG2PIE + 0.5 * np.log(np.maximum(det2, 1e-300))

    values, p_star, excluded, excluded_mass = _surface_from_paths(
        F, np.sqrt(nv), H1, rng, kde_cap, min_accept
    )
    i, j = np.unravel_index(np.argmax(values), values.shape)
    return GroundTruthSurface(
        grid=grid,
        values=values,
        argmax_pair=(float(grid[i]), float(grid[j])),
        p_star=p_star,
        excluded=excluded,
        excluded_mass=excluded_mass,
    )


def surface_bootstrap_se(
    data: Dataset,
    hyper: GpHyper,
    grid_n: int,
    n_paths: int,
    rng: np.random.Generator,
    n_boot: int = 20,
    kde_cap: int = 400,
    min_accept: int = 50,
) -> np.ndarray:
    """Bootstrap standard error of the surface values: resample paths with
    replacement and recompute the surface ``n_boot`` times."""
    grid = np.linspace(0.0, 1.0, grid_n)
    pred = posterior_predictive(data, hyper, grid[:, None])
    L, _ = chol_with_jitter(pred.cov)
    F = pred.mean[None, :] + rng.standard_normal((n_paths, grid_n)) @ L.T
    nv = hyper.noise_var
    var = np.clip(np.diag(pred.cov), 0.0, None) + nv
    det2 = var[:, None] * var[None, :] - pred.cov**2
    d = np.clip(np.diag(pred.cov), 0.0, None)
    np.fill_diagonal(det2, nv * (2.0 * d + nv))
    H1 = _LOG2PIE + 0.5 * np.log(np.maximum(det2, 1e-300))
    reps = []
    for _ in range(n_boot):
        idx = rng.integers(0, n_paths, n_paths)
        vals, _, _, _ = _surface_from_paths(F[idx], np.sqrt(nv), H1, rng,
                                            kde_cap, min_accept)
        reps.append(vals)
    return np.std(np.stack(reps), axis=0, ddof=1)
