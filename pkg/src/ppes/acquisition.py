"""The parallel predictive entropy search acquisition: Monte-Carlo value,
analytic gradient, and the joint batch optimizer.

The value of a batch is the average, over sampled (hyperparameter, maximizer)
pairs, of half the log-determinant gap between the unconstrained predictive
covariance of the batch and its covariance after conditioning on the sampled
point being the global maximizer (via EP).  Batches are treated as sets: rows
are canonically ordered internally, so value and gradient are exactly
permutation symmetric/equivariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ep import EpFailure, ep_condition_batch
from .gp import Dataset, Domain, GpHyper, chol_with_jitter, kernel
from .maximizer import (
    MAP,
    RANDOM_FEATURE,
    MaximizerSample,
    map_maximizer,
    sample_maximizer_rf,
)
from .optim import batch_ascent

BatchCandidate = np.ndarray  # (Q, D) rows in the domain


@dataclass
class AcquisitionContext:
    """Frozen Monte-Carlo context: data plus M (hyper, maximizer) samples and
    cached per-sample conditioning factors."""

    data: Dataset
    samples: list  # list[MaximizerSample]
    # Stacked per-sample caches (built in __post_init__):
    lengthscales: np.ndarray = field(init=False)
    signal_var: np.ndarray = field(init=False)
    noise_var: np.ndarray = field(init=False)
    mean: np.ndarray = field(init=False)
    xstars: np.ndarray = field(init=False)
    Linv: np.ndarray | None = field(init=False)
    alpha: np.ndarray | None = field(init=False)

    def __post_init__(self):
        if not self.samples:
            raise ValueError("need at least one maximizer sample")
        hypers = [s.hyper for s in self.samples]
        self.lengthscales = np.stack([h.lengthscales for h in hypers])
        self.signal_var = np.array([h.signal_var for h in hypers])
        self.noise_var = np.array([h.noise_var for h in hypers])
        self.mean = np.array([h.mean for h in hypers])
        self.xstars = np.stack([np.asarray(s.x_star, dtype=float) for s in self.samples])
        n = self.data.n
        if n == 0:
            self.Linv = None
            self.alpha = None
            return
        Linv = np.empty((self.M, n, n))
        alpha = np.empty((self.M, n))
        eye = np.eye(n)
        for i, h in enumerate(hypers):
            Kdd = kernel(h, self.data.X, self.data.X) + h.noise_var * eye
            L, _ = chol_with_jitter(Kdd)
            Li = np.linalg.solve(L, eye)
            Linv[i] = Li
            alpha[i] = Li.T @ (Li @ (self.data.y - h.mean))
        self.Linv = Linv
        self.alpha = alpha

    @property
    def M(self) -> int:
        return len(self.samples)

    @property
    def y_max(self) -> float:
        return self.data.y_max


def build_context(
    data: Dataset,
    domain: Domain,
    Q: int,
    hypers: list,
    rng: np.random.Generator,
    n_features: int = 500,
    max_redraws: int = 50,
) -> AcquisitionContext:
    """Draw one maximizer sample per hyperparameter sample and assemble the
    acquisition context.

    Each candidate maximizer is vetted by a probe EP run on a random batch;
    samples whose EP run fails or stalls are redrawn, up to ``max_redraws``
    times, after which the MAP maximizer is used instead.
    """
    probe = domain.uniform(rng, Q)
    samples = []
    for hyper in hypers:
        chosen = None
        for _ in range(max_redraws):
            x_star = sample_maximizer_rf(data, hyper, domain, n_features, rng)
            if _probe_ep_ok(data, hyper, probe, x_star):
                chosen = MaximizerSample(hyper, x_star, RANDOM_FEATURE)
                break
        if chosen is None:
            chosen = MaximizerSample(hyper, map_maximizer(data, hyper, domain, rng), MAP)
        samples.append(chosen)
    return AcquisitionContext(data=data, samples=samples)


def _probe_ep_ok(data: Dataset, hyper: GpHyper, probe: np.ndarray, x_star: np.ndarray) -> bool:
    from .gp import posterior_predictive

    rows = np.vstack([probe, x_star[None, :]])
    pred = posterior_predictive(data, hyper, rows)
    try:
        _, _, _, _, conv, failed, _ = ep_condition_batch(
            pred.mean[None], pred.cov[None], np.array([data.y_max]),
            np.array([hyper.noise_var]),
        )
    except EpFailure:
        return False
    return bool(conv[0] and not failed[0])


# ---------------------------------------------------------------------------
# Joint predictive over batches of candidate batches, one row-set per sample.


def _joint_predictive(ctx: AcquisitionContext, batches: np.ndarray):
    """Posterior mean/cov of [batch rows; x_star] per (batch, sample).

    batches: (B, Q, D).  Returns mean (B, M, n_r) and cov (B, M, n_r, n_r)
    with n_r = Q + 1.
    """
    B, Q, D = batches.shape
    M = ctx.M
    rows = np.empty((B, M, Q + 1, D))
    rows[:, :, :Q, :] = batches[:, None, :, :]
    rows[:, :, Q, :] = ctx.xstars[None, :, :]
    ls = ctx.lengthscales
    r_s = rows / ls[None, :, None, :]
    sq = (
        np.sum(r_s * r_s, axis=3)[:, :, :, None]
        + np.sum(r_s * r_s, axis=3)[:, :, None, :]
        - 2.0 * np.einsum("bmid,bmjd->bmij", r_s, r_s)
    )
    K_rr = ctx.signal_var[None, :, None, None] * np.exp(-0.5 * np.clip(sq, 0.0, None))
    if ctx.data.n == 0:
        mean = np.broadcast_to(ctx.mean[None, :, None], (B, M, Q + 1)).copy()
        return mean, K_rr, rows, None
    d_s = ctx.data.X[None, :, :] / ls[:, None, :]
    sq_rd = (
        np.sum(r_s * r_s, axis=3)[:, :, :, None]
        + np.sum(d_s * d_s, axis=2)[None, :, None, :]
        - 2.0 * np.einsum("bmid,mjd->bmij", r_s, d_s)
    )
    K_rd = ctx.signal_var[None, :, None, None] * np.exp(-0.5 * np.clip(sq_rd, 0.0, None))
    V = np.einsum("mij,bmrj->bmir", ctx.Linv, K_rd)
    cov = K_rr - np.einsum("bmir,bmis->bmrs", V, V)
    cov = 0.5 * (cov + np.swapaxes(cov, 2, 3))
    mean = ctx.mean[None, :, None] + np.einsum("bmrj,mj->bmr", K_rd, ctx.alpha)
    return mean, cov, rows, (K_rd, V)


def _canonical(batch: np.ndarray):
    """Lexicographic row order plus deterministic perturbation of duplicates."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    order = np.lexsort(batch.T[::-1])
    b = batch[order].copy()
    for j in range(1, b.shape[0]):
        if np.array_equal(b[j], b[j - 1]):
            b[j] = b[j] + 1e-6 * j
    return b, order


def _ep_on_batches(ctx: AcquisitionContext, batches: np.ndarray, tol: float = 1e-6):
    """EP-condition every (batch, sample) pair; returns stacked results."""
    B, Q, _ = batches.shape
    M = ctx.M
    mean, cov, rows, extras = _joint_predictive(ctx, batches)
    m_flat = mean.reshape(B * M, Q + 1)
    K_flat = cov.reshape(B * M, Q + 1, Q + 1)
    y_max = np.full(B * M, ctx.y_max)
    nv = np.tile(ctx.noise_var, B)
    mu, Sigma, prec, shift, conv, failed, _ = ep_condition_batch(
        m_flat, K_flat, y_max, nv, tol=tol
    )
    ok = (conv & ~failed).reshape(B, M)
    return mean, cov, Sigma.reshape(B, M, Q + 1, Q + 1), ok, rows, extras


def _logdet_batch(A: np.ndarray) -> np.ndarray:
    sign, ld = np.linalg.slogdet(A)
    ld = np.where(sign > 0, ld, np.nan)
    return ld


def ppes_values(batches: np.ndarray, ctx: AcquisitionContext, chunk: int = 256) -> np.ndarray:
    """ppes_value for a stack of batches, (B, Q, D) -> (B,).

    Samples whose EP run fails are dropped from that batch's average; a batch
    where every sample fails scores -inf.
    """
    batches = np.asarray(batches, dtype=float)
    B, Q, _ = batches.shape
    out = np.empty(B)
    eye = np.eye(Q)
    for lo in range(0, B, chunk):
        hi = min(lo + chunk, B)
        sl = batches[lo:hi]
        _, cov, Sigma, ok, _, _ = _ep_on_batches(ctx, sl)
        nv = ctx.noise_var[None, :, None, None] * eye
        ld_prior = _logdet_batch(cov[:, :, :Q, :Q] + nv)
        ld_post = _logdet_batch(Sigma[:, :, :Q, :Q] + nv)
        term = 0.5 * (ld_prior - ld_post)
        ok_here = ok & np.isfinite(term)
        term = np.where(ok_here, term, 0.0)
        cnt = ok_here.sum(axis=1)
        with np.errstate(invalid="ignore"):
            vals = term.sum(axis=1) / cnt
        vals = np.where(cnt > 0, vals, -np.inf)
        out[lo:hi] = vals
    return out


def ppes_value(batch: BatchCandidate, ctx: AcquisitionContext) -> float:
    """Monte-Carlo information gain of querying the batch jointly.

    Average over samples of 0.5 [log det(K + noise I) - log det(Sigma + noise I)]
    on the Q batch coordinates, where Sigma is the EP-conditioned covariance.
    Raises EpFailure when every sample's EP run fails.
    """
    b, _ = _canonical(batch)
    v = float(ppes_values(b[None], ctx)[0])
    if not np.isfinite(v):
        raise EpFailure("EP failed for every maximizer sample on this batch")
    return v


def _inv_psd_batch(A: np.ndarray) -> np.ndarray:
    n = A.shape[-1]
    scale = np.trace(A, axis1=-2, axis2=-1)[..., None, None] / n
    for jit in (0.0, 1e-12, 1e-10, 1e-8, 1e-6):
        try:
            return np.linalg.inv(A + jit * scale * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("batch inverse failed after jitter escalation")


def ppes_gradient(batch: BatchCandidate, ctx: AcquisitionContext) -> np.ndarray:
    """Gradient of ppes_value in the batch coordinates, shape (Q, D).

    Per-sample trace terms of the log-determinant gap, with the EP site
    parameters held fixed and the conditioned covariance differentiated
    through the prior block only.  Exploits the one-nonzero-row/column
    structure of the prior derivative.
    """
    b, order = _canonical(batch)
    Q, D = b.shape
    mean, cov, Sigma, ok, rows, extras = _ep_on_batches(ctx, b[None])
    cov, Sigma, ok = cov[0], Sigma[0], ok[0]
    if not ok.any():
        raise EpFailure("EP failed for every maximizer sample on this batch")
    M = ctx.M
    n_r = Q + 1
    eyeQ = np.eye(Q)
    nvQ = ctx.noise_var[:, None, None] * eyeQ
    A = _inv_psd_batch(cov[:, :Q, :Q] + nvQ)
    Bt = _inv_psd_batch(Sigma[:, :Q, :Q] + nvQ)
    At = np.zeros((M, n_r, n_r))
    At[:, :Q, :Q] = A
    Btp = np.zeros((M, n_r, n_r))
    Btp[:, :Q, :Q] = Bt
    Kinv = _inv_psd_batch(cov)
    P = np.einsum("mij,mjk->mik", Kinv, Sigma)
    G = np.einsum("mij,mjk,mlk->mil", P, Btp, P)

    r = rows[0]  # (M, n_r, D)
    ls2 = ctx.lengthscales**2  # (M, D)
    K_rr = None
    if extras is None:
        # No data: the joint covariance is the prior kernel matrix itself.
        K_rr = cov
    else:
        K_rd, V = extras
        K_rd = K_rd[0]  # (M, n_r, n)
        V = V[0]  # (M, n, n_r)
        Xd = ctx.data.X  # (n, D)
        K_rr = cov + np.einsum("mir,mis->mrs", V, V)  # prior kernel block

    grad_s = np.zeros((Q, D))
    for q in range(Q):
        # Derivative of k(x_q, r_j) with respect to x_q, for all rows j.
        diff = (r[:, q, None, :] - r) / ls2[:, None, :]  # (M, n_r, D)
        dk_prior = -K_rr[:, q, :, None] * diff  # (M, n_r, D)
        if extras is not None:
            ddiff = (b[q][None, None, :] - Xd[None, :, :]) / ls2[:, None, :]
            dk_q = -K_rd[:, q, :, None] * ddiff  # (M, n, D)
            u = np.einsum("mij,mjd->mid", ctx.Linv, dk_q)  # (M, n, D)
            corr = np.einsum("mid,mij->mjd", u, V)  # (M, n_r, D)
        else:
            corr = 0.0
        w = dk_prior - corr  # (M, n_r, D); w[q] is half the diagonal derivative
        t1 = np.einsum("mj,mjd->md", At[:, q, :], w)
        t2 = np.einsum("mj,mjd->md", G[:, q, :], w)
        contrib = t1 - t2
        grad_s[q] = np.mean(contrib[ok], axis=0)

    grad = np.empty_like(grad_s)
    grad[order] = grad_s
    return grad


def optimize_batch(
    ctx: AcquisitionContext,
    domain: Domain,
    Q: int,
    rng: np.random.Generator,
    n_scan: int = 1000,
    max_steps: int = 100,
    n_polish: int = 1,
) -> BatchCandidate:
    """Random scan of ``n_scan`` uniform batches followed by projected
    gradient ascent from the best; returns the better of the two.  EP
    failures during the search score -inf for that candidate."""
    D = domain.dim
    scan = domain.uniform(rng, n_scan * Q).reshape(n_scan, Q, D)
    vals = ppes_values(scan, ctx)
    order = np.argsort(-np.where(np.isfinite(vals), vals, -np.inf))
    best_idx = order[0]
    best_v = vals[best_idx]

    flat_dom = Domain(np.tile(domain.lower, Q), np.tile(domain.upper, Q))

    def fg(Z):
        B = Z.shape[0]
        v = np.empty(B)
        g = np.zeros((B, Q * D))
        for i in range(B):
            cand = Z[i].reshape(Q, D)
            try:
                v[i] = ppes_value(cand, ctx)
                g[i] = ppes_gradient(cand, ctx).ravel()
            except (EpFailure, np.linalg.LinAlgError):
                v[i] = -np.inf
        return v, g

    starts = scan[order[:n_polish]].reshape(n_polish, Q * D)
    Xp, vp = batch_ascent(fg, starts, flat_dom, max_steps=max_steps)
    i = int(np.argmax(vp))
    if np.isfinite(vp[i]) and vp[i] > best_v:
        return Xp[i].reshape(Q, D).copy()
    return scan[best_idx].copy()
