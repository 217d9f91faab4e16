"""Projected gradient ascent with backtracking, vectorized over starts.

Used for maximizer sampling, acquisition polishing, and the baseline
policies' candidate refinement.  Functions are maximized; step sizes adapt
per start (shrink on rejection, grow on acceptance) and iterates stay inside
the box domain by clipping.
"""

from __future__ import annotations

import numpy as np

from .gp import Domain


def batch_ascent(
    fg,
    X0: np.ndarray,
    domain: Domain,
    max_steps: int = 200,
    step0: float = 0.25,
    shrink: float = 0.5,
    grow: float = 1.3,
    min_step: float = 1e-12,
):
    """Maximize fg over the domain from each row of X0.

    Args:
        fg: callable mapping (B, d) points to (values (B,), gradients (B, d)).
            Values may be -inf or NaN; such moves are rejected.
        X0: starting points, shape (B, d).

    Returns:
        (X, values) after ascent, same shapes as the inputs.
    """
    X = domain.clip(np.atleast_2d(np.asarray(X0, dtype=float)).copy())
    v, G = fg(X)
    v = np.asarray(v, dtype=float).copy()
    G = np.asarray(G, dtype=float).copy()
    span = float(np.max(domain.upper - domain.lower))
    step = np.full(X.shape[0], step0 * span)
    active = np.isfinite(v)
    for _ in range(max_steps):
        if not active.any():
            break
        gnorm = np.linalg.norm(G, axis=1)
        move = active & (gnorm > 1e-14) & (step > min_step)
        if not move.any():
            break
        scale = np.where(gnorm > 1e-14, step / np.maximum(gnorm, 1e-300), 0.0)
        cand = domain.clip(X + scale[:, None] * G)
        v_new, G_new = fg(cand)
        v_new = np.asarray(v_new, dtype=float)
        improved = move & np.isfinite(v_new) & (v_new > v + 1e-14 * (1.0 + np.abs(v)))
        X[improved] = cand[improved]
        v[improved] = v_new[improved]
        G[improved] = np.asarray(G_new, dtype=float)[improved]
        step[improved] = np.minimum(step[improved] * grow, span)
        rejected = move & ~improved
        step[rejected] *= shrink
        active = active & (step > min_step)
    return X, v


def maximize_scalar_field(
    fg,
    domain: Domain,
    rng: np.random.Generator,
    n_candidates: int = 2000,
    n_polish: int = 1,
    max_steps: int = 200,
    extra_starts: np.ndarray | None = None,
):
    """Candidate scan plus gradient polish of the best starts.

    fg follows the batch_ascent contract.  Returns (x, value) for the single
    best point found.
    """
    cand = domain.uniform(rng, n_candidates)
    if extra_starts is not None and len(extra_starts):
        cand = np.vstack([cand, domain.clip(np.atleast_2d(extra_starts))])
    v, _ = fg(cand)
    v = np.asarray(v, dtype=float)
    order = np.argsort(-np.where(np.isfinite(v), v, -np.inf))
    top = cand[order[:n_polish]]
    Xp, vp = batch_ascent(fg, top, domain, max_steps=max_steps)
    i_scan = order[0]
    i_pol = int(np.argmax(vp))
    if np.isfinite(vp[i_pol]) and vp[i_pol] >= v[i_scan]:
        return Xp[i_pol].copy(), float(vp[i_pol])
    return cand[i_scan].copy(), float(v[i_scan])
