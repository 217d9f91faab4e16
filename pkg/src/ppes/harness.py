"""Experiment runner: initialization, policy loop, recommendations, immediate
regret, aggregation with bootstrap bands, and CSV/JSON reporting.

Each repeat initializes with uniform points, then iterates: sample the
hyperparameter posterior, run the configured policy for a batch of Q points,
observe them noisily, and record the recommendation (argmax of the
hyper-averaged posterior mean over the data so far) together with its
immediate regret against the objective's known maximum.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import PolicyConfig, _GpState, select_batch
from .gp import Dataset, GpHyper, sample_hyperparameters, unit_domain
from .objectives import Objective, objective_by_name, observe
from .optim import batch_ascent

__all__ = [
    "ExperimentConfig",
    "RegretTrace",
    "run_experiment",
    "run_many",
    "aggregate",
    "recommend",
    "write_csv",
    "write_summary",
    "worker_count",
]


@dataclass
class ExperimentConfig:
    objective: str
    policy: PolicyConfig
    T: int
    repeats: int = 1
    seed: int = 0
    M: int = 20
    init_count: int = 5
    noise_sd: float = 0.1
    out: str | None = None

    def __post_init__(self):
        if self.T < 1 or self.repeats < 1 or self.init_count < 1:
            raise ValueError("T, repeats and init_count must all be at least 1")


@dataclass
class RegretTrace:
    recommendations: np.ndarray  # (T, D)
    regrets: np.ndarray  # (T,)
    wall_ms: np.ndarray  # (T,)
    batches: np.ndarray  # (T, Q, D)
    aborted: bool = False
    error: str | None = None


def recommend(data: Dataset, domain, hypers: list, rng: np.random.Generator,
              n_candidates: int = 2000) -> np.ndarray:
    """Argmax of the posterior mean averaged over hyperparameter samples."""
    states = [_GpState(data, h) for h in hypers]

    def fg(X):
        mu = np.zeros(len(np.atleast_2d(X)))
        g = np.zeros_like(np.atleast_2d(X))
        for s in states:
            m, dm = s.mean_grad(X)
            mu += m
            g += dm
        return mu / len(states), g / len(states)

    cand = domain.uniform(rng, n_candidates)
    if data.n:
        cand = np.vstack([cand, data.X])
    v, _ = fg(cand)
    i = int(np.argmax(v))
    Xp, vp = batch_ascent(fg, cand[i][None], domain, max_steps=100)
    if np.isfinite(vp[0]) and vp[0] >= v[i]:
        return Xp[0].copy()
    return cand[i].copy()


def run_experiment(cfg: ExperimentConfig, rng: np.random.Generator) -> RegretTrace:
    """One repeat of the benchmark loop; aborts (with the error recorded)
    if the policy raises at some iteration."""
    obj = objective_by_name(cfg.objective, cfg.noise_sd)
    if obj.known_max is None:
        raise ValueError(f"objective {obj.name!r} has no known maximum for regret")
    domain = unit_domain(obj.dim)
    X0 = domain.uniform(rng, cfg.init_count)
    y0 = np.array([observe(obj, x, rng) for x in X0])
    data = Dataset(X0, y0)

    Q, T, D = cfg.policy.Q, cfg.T, obj.dim
    recs = np.full((T, D), np.nan)
    regrets = np.full(T, np.nan)
    wall = np.full(T, np.nan)
    batches = np.full((T, Q, D), np.nan)
    warm: GpHyper | None = None
    for t in range(1, T + 1):
        t0 = time.perf_counter()
        try:
            hypers = sample_hyperparameters(
                data, rng, cfg.M, burn_in=300 if warm is None else 100, thin=5,
                init=warm,
            )
            warm = hypers[-1]
            batch = select_batch(cfg.policy, data, domain, hypers, rng, t=t)
        except Exception as exc:  # policy failure aborts the repeat
            return RegretTrace(recs, regrets, wall, batches, aborted=True,
                               error=f"iteration {t}: {exc!r}")
        y_new = np.array([observe(obj, x, rng) for x in batch])
        data = data.extended(batch, y_new)
        x_rec = recommend(data, domain, hypers, rng)
        recs[t - 1] = x_rec
        regrets[t - 1] = abs(obj.evaluate(x_rec) - obj.known_max)
        batches[t - 1] = batch
        wall[t - 1] = 1000.0 * (time.perf_counter() - t0)
    return RegretTrace(recs, regrets, wall, batches)


def _run_repeat(args):
    cfg, seed_seq = args
    return run_experiment(cfg, np.random.default_rng(seed_seq))


def worker_count() -> int:
    """Thread-pool size from the PPES_WORKERS environment variable,
    defaulting to the CPU count."""
    raw = os.environ.get("PPES_WORKERS", "")
    if raw.strip():
        return max(1, int(raw))
    return os.cpu_count() or 1


def run_many(cfg: ExperimentConfig) -> list:
    """All repeats of an experiment, in parallel when workers allow."""
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.repeats)
    jobs = [(cfg, s) for s in seqs]
    workers = min(worker_count(), cfg.repeats)
    if workers > 1:
        import multiprocessing as mp

        with mp.Pool(workers) as pool:
            return pool.map(_run_repeat, jobs)
    return [_run_repeat(j) for j in jobs]


def aggregate(traces: list, n_boot: int = 1000, seed: int = 0) -> dict:
    """Per-iteration median regret and a bootstrap one-standard-deviation
    band of the median over completed traces."""
    if not traces:
        raise ValueError("need at least one trace")
    done = [tr for tr in traces if not tr.aborted]
    aborted = len(traces) - len(done)
    if not done:
        return {"aborted": aborted, "completed": 0}
    R = np.stack([tr.regrets for tr in done])  # (n, T)
    med = np.median(R, axis=0)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(done), size=(n_boot, len(done)))
    boot_meds = np.median(R[idx], axis=1)  # (n_boot, T)
    sd = np.std(boot_meds, axis=0, ddof=1) if len(done) > 1 else np.zeros_like(med)
    return {
        "completed": len(done),
        "aborted": aborted,
        "median_regret": med.tolist(),
        "band_lower": (med - sd).tolist(),
        "band_upper": (med + sd).tolist(),
        "final_median_regret": float(med[-1]),
    }


def write_csv(path: str, traces: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "t", "r_t", "x_tilde", "batch", "wall_ms"])
        for run_id, tr in enumerate(traces):
            T = tr.regrets.shape[0]
            for t in range(T):
                if np.isnan(tr.regrets[t]):
                    continue
                w.writerow(
                    [
                        run_id,
                        t + 1,
                        f"{tr.regrets[t]:.10g}",
                        " ".join(f"{v:.8g}" for v in tr.recommendations[t]),
                        " ".join(f"{v:.8g}" for v in tr.batches[t].ravel()),
                        f"{tr.wall_ms[t]:.3f}",
                    ]
                )


def write_summary(path: str, cfg: ExperimentConfig, report: dict) -> None:
    payload = {
        "objective": cfg.objective,
        "policy": cfg.policy.method,
        "Q": cfg.policy.Q,
        "T": cfg.T,
        "repeats": cfg.repeats,
        "seed": cfg.seed,
        "M": cfg.M,
        "report": report,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
