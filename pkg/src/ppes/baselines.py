"""Competing batch policies: EI (single point), EI-MCMC, simulated-matching
UCB, GP-BUCB, and GP-UCB-PE, behind one batch-policy interface.

All policies score candidates with exact GP quantities under a single
hyperparameter setting (EI-MCMC averages over a list of settings) and share a
candidate-scan-plus-gradient-polish maximizer.  Hallucinated observations
update only the predictive variance; the mean stays pinned to the real data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .gp import Dataset, Domain, GpHyper, chol_with_jitter, kernel, posterior_predictive
from .optim import batch_ascent

__all__ = [
    "UcbSchedule",
    "PolicyConfig",
    "default_schedule",
    "expected_improvement",
    "ei_mcmc_batch",
    "sm_ucb_batch",
    "gp_bucb_batch",
    "gp_ucb_pe_batch",
    "select_batch",
]


@dataclass(frozen=True)
class UcbSchedule:
    alpha_t: callable

    def __call__(self, t: int) -> float:
        a = float(self.alpha_t(t))
        if a <= 0:
            raise ValueError("UCB schedule must be positive")
        return a


def default_schedule(dim: int) -> UcbSchedule:
    return UcbSchedule(lambda t: 2.0 * math.log(dim * max(t, 1) ** 2 * math.pi**2 / 0.6))


@dataclass
class PolicyConfig:
    method: str  # PPES | EI_MCMC | SM_UCB | GP_BUCB | GP_UCB_PE | RANDOM
    Q: int
    n_fantasy: int = 100
    pool: int = 30
    schedule: UcbSchedule | None = None
    m_features: int = 500
    n_scan: int = 1000

    def __post_init__(self):
        if self.Q < 1:
            raise ValueError("Q must be at least 1")


# ---------------------------------------------------------------------------
# Shared GP state: posterior mean from the real data, posterior variance from
# the real data plus optional hallucinated inputs.


class _GpState:
    def __init__(self, data: Dataset, hyper: GpHyper, var_X: np.ndarray | None = None):
        self.data = data
        self.hyper = hyper
        if var_X is None or len(var_X) == 0:
            Xc = data.X
        elif data.n == 0:
            Xc = np.atleast_2d(var_X)
        else:
            Xc = np.vstack([data.X, np.atleast_2d(var_X)])
        self.Xc = Xc
        eye_c = np.eye(len(Xc))
        if len(Xc):
            Lc, _ = chol_with_jitter(kernel(hyper, Xc, Xc) + hyper.noise_var * eye_c)
            self.Linv_c = np.linalg.solve(Lc, eye_c)
        else:
            self.Linv_c = None
        if data.n:
            Ld, _ = chol_with_jitter(
                kernel(hyper, data.X, data.X) + hyper.noise_var * np.eye(data.n)
            )
            self.alpha = np.linalg.solve(Ld.T, np.linalg.solve(Ld, data.y - hyper.mean))
        else:
            self.alpha = None
        self.inv_l2 = 1.0 / hyper.lengthscales**2

    def mean_grad(self, X: np.ndarray):
        X = np.atleast_2d(X)
        if self.alpha is None:
            return np.full(len(X), self.hyper.mean), np.zeros_like(X)
        Kxd = kernel(self.hyper, X, self.data.X)
        E = Kxd * self.alpha
        mu = self.hyper.mean + E.sum(axis=1)
        dmu = -(X * E.sum(axis=1)[:, None] - E @ self.data.X) * self.inv_l2
        return mu, dmu

    def var_grad(self, X: np.ndarray):
        X = np.atleast_2d(X)
        sv = self.hyper.signal_var
        if self.Linv_c is None:
            return np.full(len(X), sv), np.zeros_like(X)
        Kxc = kernel(self.hyper, X, self.Xc)
        V = self.Linv_c @ Kxc.T  # (n_c, B)
        var = np.clip(sv - np.sum(V * V, axis=0), 0.0, None)
        W = (self.Linv_c.T @ V).T  # (B, n_c)
        E = W * Kxc
        dvar = 2.0 * (X * E.sum(axis=1)[:, None] - E @ self.Xc) * self.inv_l2
        return var, dvar

    def sd_grad(self, X: np.ndarray):
        var, dvar = self.var_grad(X)
        sd = np.sqrt(var)
        with np.errstate(divide="ignore", invalid="ignore"):
            dsd = np.where(sd[:, None] > 1e-12, dvar / (2.0 * sd[:, None]), 0.0)
        return sd, dsd


def _ucb_fg(state: _GpState, root_alpha: float):
    def fg(X):
        mu, dmu = state.mean_grad(X)
        sd, dsd = state.sd_grad(X)
        return mu + root_alpha * sd, dmu + root_alpha * dsd

    return fg


def _maximize(fg, domain: Domain, rng: np.random.Generator, n_candidates: int = 2000,
              max_steps: int = 100):
    cand = domain.uniform(rng, n_candidates)
    v, _ = fg(cand)
    i = int(np.argmax(v))
    Xp, vp = batch_ascent(fg, cand[i][None], domain, max_steps=max_steps)
    if np.isfinite(vp[0]) and vp[0] >= v[i]:
        return Xp[0].copy()
    return cand[i].copy()


# ---------------------------------------------------------------------------
# Expected improvement


def _ei_terms(mu, sd, best):
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(sd > 1e-12, (mu - best) / np.maximum(sd, 1e-300), 0.0)
    dense = np.exp(-0.5 * tau * tau) / math.sqrt(2.0 * math.pi)
    cum = stats.norm.cdf(tau)
    ei = np.where(sd > 1e-12, sd * (dense + tau * cum), np.maximum(mu - best, 0.0))
    return ei, dense, cum


def expected_improvement(x: np.ndarray, data: Dataset, hyper: GpHyper) -> float:
    """EI over the best observed (noisy) output at a single point."""
    if data.n == 0:
        raise ValueError("expected improvement needs data")
    state = _GpState(data, hyper)
    mu, _ = state.mean_grad(np.atleast_2d(x))
    sd, _ = state.sd_grad(np.atleast_2d(x))
    ei, _, _ = _ei_terms(mu, sd, data.y_max)
    return float(ei[0])


def _ei_fg(state: _GpState, best: float):
    def fg(X):
        mu, dmu = state.mean_grad(X)
        sd, dsd = state.sd_grad(X)
        ei, dense, cum = _ei_terms(mu, sd, best)
        grad = cum[:, None] * dmu + dense[:, None] * dsd
        return ei, grad

    return fg


def ei_mcmc_batch(
    data: Dataset,
    domain: Domain,
    hypers: list,
    Q: int,
    n_fantasy: int,
    rng: np.random.Generator,
    n_candidates: int = 2000,
) -> np.ndarray:
    """Greedy batch EI with Monte-Carlo fantasies of pending outcomes.

    Each fantasy draws joint noisy outcomes at the already-chosen points from
    the posterior predictive under one of the hyperparameter samples (cycled);
    the next point maximizes EI averaged over fantasies.  With Q=1 this is
    the argmax of hyperparameter-averaged expected improvement.
    """
    if data.n == 0:
        raise ValueError("EI-MCMC needs data")
    best = data.y_max
    picks: list[np.ndarray] = []
    for j in range(Q):
        if not picks:
            states = [_GpState(data, h) for h in hypers]
            fgs = [_ei_fg(s, best) for s in states]

            def fg(X):
                vals = np.zeros(len(np.atleast_2d(X)))
                grads = np.zeros_like(np.atleast_2d(X))
                for f in fgs:
                    v, g = f(X)
                    vals += v
                    grads += g
                return vals / len(fgs), grads / len(fgs)

            x = _maximize(fg, domain, rng, n_candidates)
        else:
            Xp = np.vstack(picks)
            fgs = []
            for s_idx in range(n_fantasy):
                h = hypers[s_idx % len(hypers)]
                pred = posterior_predictive(data, h, Xp)
                Lp, _ = chol_with_jitter(pred.cov + h.noise_var * np.eye(len(Xp)))
                y_f = pred.mean + Lp @ rng.standard_normal(len(Xp))
                fake = data.extended(Xp, y_f)
                state = _GpState(fake, h)
                fgs.append(_ei_fg(state, best))

            def fg(X):
                vals = np.zeros(len(np.atleast_2d(X)))
                grads = np.zeros_like(np.atleast_2d(X))
                for f in fgs:
                    v, g = f(X)
                    vals += v
                    grads += g
                return vals / len(fgs), grads / len(fgs)

            x = _maximize(fg, domain, rng, n_candidates)
        # Nudge exact repeats so the batch never contains duplicates.
        while any(np.array_equal(x, p) for p in picks):
            x = domain.clip(x + 1e-6 * rng.standard_normal(x.size))
        picks.append(x)
    return np.vstack(picks)


# ---------------------------------------------------------------------------
# Simulated matching with a UCB baseline policy


def sm_ucb_batch(
    data: Dataset,
    domain: Domain,
    hyper: GpHyper,
    Q: int,
    pool: int,
    rng: np.random.Generator,
    schedule: UcbSchedule | None = None,
    t: int = 1,
    n_candidates: int = 2000,
) -> np.ndarray:
    """Simulate the sequential UCB policy ``pool`` times over Q fantasized
    steps, keep each simulation's best point, and return Q greedy k-medoids
    of that population (squared Euclidean distance)."""
    if pool < Q:
        raise ValueError("pool must be at least Q")
    if schedule is None:
        schedule = default_schedule(domain.dim)
    root_alpha = math.sqrt(schedule(t))
    population = np.empty((pool, domain.dim))
    for p in range(pool):
        sim = data
        best_val = -np.inf
        best_x: np.ndarray | None = None
        for _ in range(Q):
            state = _GpState(sim, hyper)
            x = _maximize(_ucb_fg(state, root_alpha), domain, rng, n_candidates,
                          max_steps=50)
            mu, _ = state.mean_grad(x[None])
            sd, _ = state.sd_grad(x[None])
            y_f = float(mu[0] + sd[0] * rng.standard_normal())
            if y_f > best_val:
                best_val, best_x = y_f, x
            sim = sim.extended(x[None], np.array([y_f]))
        population[p] = best_x
    return population[_greedy_k_medoids(population, Q)]


def _greedy_k_medoids(P: np.ndarray, Q: int) -> list[int]:
    d2 = np.sum((P[:, None, :] - P[None, :, :]) ** 2, axis=2)
    chosen: list[int] = []
    current = np.full(len(P), np.inf)
    for _ in range(Q):
        best_j, best_obj = -1, np.inf
        for j in range(len(P)):
            if j in chosen:
                continue
            obj = np.minimum(current, d2[:, j]).sum()
            if obj < best_obj - 1e-15:
                best_obj, best_j = obj, j
        chosen.append(best_j)
        current = np.minimum(current, d2[:, best_j])
    return chosen


# ---------------------------------------------------------------------------
# GP-BUCB and GP-UCB-PE


def gp_bucb_batch(
    data: Dataset,
    domain: Domain,
    hyper: GpHyper,
    Q: int,
    schedule: UcbSchedule | None = None,
    t: int = 1,
    n_candidates: int = 2000,
) -> np.ndarray:
    """Sequential UCB picks with hallucinated variance shrinkage.

    After each pick the predictive variance is updated as if the posterior
    mean had been observed there (which leaves the mean itself unchanged);
    the mean term stays that of the real data for the whole batch.  The
    policy is deterministic: candidates come from a fixed-seed stream.
    """
    if schedule is None:
        schedule = default_schedule(domain.dim)
    root_alpha = math.sqrt(schedule(t))
    rng = np.random.default_rng(1234 + 31 * t)
    picks: list[np.ndarray] = []
    for _ in range(Q):
        var_X = np.vstack(picks) if picks else None
        state = _GpState(data, hyper, var_X=var_X)
        picks.append(_maximize(_ucb_fg(state, root_alpha), domain, rng, n_candidates))
    return np.vstack(picks)


def gp_ucb_pe_batch(
    data: Dataset,
    domain: Domain,
    hyper: GpHyper,
    Q: int,
    schedule: UcbSchedule | None = None,
    t: int = 1,
    rng: np.random.Generator | None = None,
    n_candidates: int = 2000,
) -> np.ndarray:
    """UCB argmax first, then greedy hallucinated-variance maximization
    restricted to the relevant region (candidates whose UCB is at least the
    best lower confidence bound)."""
    if schedule is None:
        schedule = default_schedule(domain.dim)
    if rng is None:
        rng = np.random.default_rng(0)
    root_alpha = math.sqrt(schedule(t))
    state = _GpState(data, hyper)
    first = _maximize(_ucb_fg(state, root_alpha), domain, rng, n_candidates)
    picks = [first]
    if Q > 1:
        cand = domain.uniform(rng, n_candidates)
        mu, _ = state.mean_grad(cand)
        sd, _ = state.sd_grad(cand)
        lcb_max = float(np.max(mu - root_alpha * sd))
        region = cand[mu + root_alpha * sd >= lcb_max]
        if len(region) == 0:
            region = cand
        for _ in range(Q - 1):
            state_h = _GpState(data, hyper, var_X=np.vstack(picks))
            var, _ = state_h.var_grad(region)
            picks.append(region[int(np.argmax(var))].copy())
    return np.vstack(picks)


# ---------------------------------------------------------------------------
# Dispatcher


def select_batch(
    cfg: PolicyConfig,
    data: Dataset,
    domain: Domain,
    hypers: list,
    rng: np.random.Generator,
    t: int = 1,
) -> np.ndarray:
    """Run the configured policy for one iteration and return its batch."""
    schedule = cfg.schedule or default_schedule(domain.dim)
    if cfg.method == "RANDOM":
        return domain.uniform(rng, cfg.Q)
    if cfg.method == "PPES":
        from .acquisition import build_context, optimize_batch

        ctx = build_context(data, domain, cfg.Q, hypers, rng, n_features=cfg.m_features)
        return optimize_batch(ctx, domain, cfg.Q, rng, n_scan=cfg.n_scan)
    if cfg.method == "EI_MCMC":
        return ei_mcmc_batch(data, domain, hypers, cfg.Q, cfg.n_fantasy, rng)
    if cfg.method == "SM_UCB":
        return sm_ucb_batch(data, domain, hypers[0], cfg.Q, cfg.pool, rng,
                            schedule=schedule, t=t)
    if cfg.method == "GP_BUCB":
        return gp_bucb_batch(data, domain, hypers[0], cfg.Q, schedule=schedule, t=t)
    if cfg.method == "GP_UCB_PE":
        return gp_ucb_pe_batch(data, domain, hypers[0], cfg.Q, schedule=schedule,
                               t=t, rng=rng)
    raise ValueError(f"unknown policy method {cfg.method!r}")
