"""Expectation propagation for a Gaussian vector conditioned on one of its
coordinates being the largest.

The vector f = (f_1, ..., f_Q, f_*) has a Gaussian prior.  Conditioning
imposes Q hard factors I(f_* >= f_q) and, when a best observed value y_max
exists, one soft factor Phi((f_* - y_max) / sigma) with sigma the observation
noise standard deviation.  Each factor acts on a scalar projection c'f and is
approximated by an unnormalized Gaussian site on that projection.  Sites are
refined by damped sweeps until their natural parameters stop moving.

The batch entry point runs many independent EP problems in lockstep on
stacked arrays, which is how the acquisition layer evaluates hundreds of
Monte Carlo samples per candidate batch at tolerable cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "EpFailure",
    "SiteParams",
    "EpResult",
    "ep_condition",
    "ep_condition_batch",
    "batch_entropy",
    "ep_log_evidence",
]

_LOG2PI = math.log(2.0 * math.pi)


class EpFailure(RuntimeError):
    """Raised when EP cannot make progress (persistent negative cavity or
    non-finite intermediate values)."""


@dataclass(frozen=True)
class SiteParams:
    """Gaussian site approximations in natural form.

    ``precision[q]`` is 1 / site variance and ``shift[q]`` is site mean times
    site precision, for the factor acting on the projection c_q'f.  The final
    entry belongs to the soft best-value factor; ``active[-1]`` is False when
    no observed best value was supplied.
    """

    precision: np.ndarray
    shift: np.ndarray
    active: np.ndarray

    @property
    def tau(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / self.precision

    @property
    def mu(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.precision > 0, self.shift / self.precision, 0.0)


@dataclass(frozen=True)
class EpResult:
    mean: np.ndarray
    cov: np.ndarray
    sites: SiteParams
    converged: bool
    sweeps: int


def _constraint_matrix(n: int) -> np.ndarray:
    """Rows are the projection directions: Q hard differences then the soft one."""
    Q = n - 1
    C = np.zeros((Q + 1, n))
    for q in range(Q):
        C[q, q] = -1.0
        C[q, -1] = 1.0
    C[Q, -1] = 1.0
    return C


def _hazard(beta: np.ndarray) -> np.ndarray:
    """phi(beta) / Phi(beta), stable far into the left tail."""
    return np.exp(-0.5 * beta * beta - 0.5 * _LOG2PI - special.log_ndtr(beta))


def ep_condition_batch(
    m: np.ndarray,
    K: np.ndarray,
    y_max: np.ndarray,
    noise_var: np.ndarray,
    damping: float = 0.5,
    tol: float = 1e-6,
    max_sweeps: int = 60,
):
    """Run EP on a stack of independent problems.

    Args:
        m: prior means, shape (B, n) with n = Q + 1.
        K: prior covariances, shape (B, n, n).
        y_max: best observed value per problem; -inf disables the soft factor.
        noise_var: observation noise variance per problem (soft factor width).

    Returns:
        (mu, Sigma, precision, shift, converged, failed, sweeps) where mu is
        (B, n), Sigma is (B, n, n), the site arrays are (B, n_sites), and the
        remaining entries are per-problem flags/counters.  Failed problems
        keep their last finite state but must not be trusted.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    K = np.asarray(K, dtype=float)
    if K.ndim == 2:
        K = K[None]
    B, n = m.shape
    y_max = np.broadcast_to(np.asarray(y_max, dtype=float), (B,)).copy()
    noise_var = np.broadcast_to(np.asarray(noise_var, dtype=float), (B,)).copy()
    if n < 2:
        raise ValueError("need at least one batch coordinate plus the maximizer")

    C = _constraint_matrix(n)
    n_sites = C.shape[0]
    soft = n_sites - 1
    active = np.ones((B, n_sites), dtype=bool)
    active[:, soft] = np.isfinite(y_max)
    a_soft = np.where(np.isfinite(y_max), y_max, 0.0)

    # Weak initial sites: variance 1e6, mean 0.
    prec = np.where(active, 1e-6, 0.0)
    shift = np.zeros((B, n_sites))

    eye = np.eye(n)
    scale = np.trace(K, axis1=1, axis2=2)[:, None, None] / n
    for jit in (1e-12, 1e-10, 1e-8, 1e-6, 1e-4):
        try:
            Kinv = np.linalg.inv(K + jit * scale * eye)
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise EpFailure("prior covariance not invertible after jitter escalation")
    h0 = np.einsum("bij,bj->bi", Kinv, m)

    def refresh(prec_b, shift_b):
        P = Kinv + np.einsum("si,bs,sj->bij", C, prec_b, C)
        Sigma_b = np.linalg.inv(P)
        Sigma_b = 0.5 * (Sigma_b + np.swapaxes(Sigma_b, 1, 2))
        mu_b = np.einsum("bij,bj->bi", Sigma_b, h0 + np.einsum("si,bs->bi", C, shift_b))
        return mu_b, Sigma_b

    mu, Sigma = refresh(prec, shift)

    alive = np.ones(B, dtype=bool)
    failed = np.zeros(B, dtype=bool)
    converged = np.zeros(B, dtype=bool)
    sweeps = np.zeros(B, dtype=int)
    skipped_last = np.zeros(B, dtype=bool)

    for sweep in range(max_sweeps):
        if not alive.any():
            break
        delta = np.zeros(B)
        skipped = np.zeros(B, dtype=bool)
        updated_any = np.zeros(B, dtype=bool)
        for q in range(n_sites):
            act = alive & active[:, q]
            if not act.any():
                continue
            c = C[q]
            Sc = np.einsum("bij,j->bi", Sigma, c)
            v_u = Sc @ c
            mu_u = mu @ c
            with np.errstate(all="ignore"):
                cav_p = np.where(v_u > 0, 1.0 / np.maximum(v_u, 1e-300), np.inf) - prec[:, q]
                ok = act & (cav_p > 1e-12) & np.isfinite(cav_p)
                skipped |= act & ~ok
                if not ok.any():
                    continue
                tau_c = 1.0 / cav_p
                mu_c = tau_c * (mu_u / v_u - shift[:, q])
                s2 = noise_var if q == soft else 0.0
                a = a_soft if q == soft else 0.0
                denom = tau_c + s2
                root = np.sqrt(np.maximum(denom, 1e-300))
                beta = (mu_c - a) / root
                rho = _hazard(beta)
                mu_hat = mu_c + tau_c * rho / root
                tau_hat = tau_c - tau_c * tau_c * rho * (rho + beta) / denom
                tau_hat = np.maximum(tau_hat, 1e-12 * tau_c)
                p_tgt = 1.0 / tau_hat - cav_p
                r_tgt = mu_hat / tau_hat - mu_c * cav_p
                p_new = np.maximum((1.0 - damping) * prec[:, q] + damping * p_tgt, 0.0)
                r_new = (1.0 - damping) * shift[:, q] + damping * r_tgt
                dp = np.where(ok, p_new - prec[:, q], 0.0)
                dr = np.where(ok, r_new - shift[:, q], 0.0)
                # Keep the precision matrix positive definite under the rank-one step.
                ok &= 1.0 + dp * v_u > 1e-12
                dp = np.where(ok, dp, 0.0)
                dr = np.where(ok, dr, 0.0)
            delta = np.maximum(delta, np.abs(dp) / (1.0 + np.abs(prec[:, q])))
            delta = np.maximum(delta, np.abs(dr) / (1.0 + np.abs(shift[:, q])))
            prec[:, q] += dp
            shift[:, q] += dr
            updated_any |= ok
            g = dp / np.maximum(1.0 + dp * v_u, 1e-300)
            coef = dr - g * (mu_u + dr * v_u)
            mu = mu + np.where(ok, coef, 0.0)[:, None] * Sc
            Sigma = Sigma - np.where(ok, g, 0.0)[:, None, None] * np.einsum(
                "bi,bj->bij", Sc, Sc
            )

        mu_r, Sigma_r = refresh(prec, shift)
        mu = np.where(alive[:, None], mu_r, mu)
        Sigma = np.where(alive[:, None, None], Sigma_r, Sigma)

        bad = alive & (
            ~np.isfinite(mu).all(axis=1)
            | ~np.isfinite(Sigma).all(axis=(1, 2))
            | ~np.isfinite(prec).all(axis=1)
            | ~np.isfinite(shift).all(axis=1)
        )
        stuck = alive & skipped & ~updated_any
        failed |= bad | stuck
        sweeps[alive] = sweep + 1
        done = alive & (delta < tol) & ~bad & ~stuck
        converged |= done
        skipped_last = skipped
        alive &= ~done & ~failed

    # Hitting the sweep cap is only an error when negative cavities were still
    # blocking updates at the end.
    failed |= alive & skipped_last
    return mu, Sigma, prec, shift, converged, failed, sweeps


def ep_condition(
    m: np.ndarray,
    K: np.ndarray,
    y_max: float = -np.inf,
    noise_var: float = 1e-4,
    damping: float = 0.5,
    tol: float = 1e-6,
    max_sweeps: int = 60,
) -> EpResult:
    """Approximate the Gaussian N(m, K) conditioned on its last coordinate
    being at least every other coordinate and, when y_max is finite, being
    probably above y_max under the observation noise.

    Returns an EpResult with the moment-matched mean and covariance.  The
    ``converged`` flag is False when the sweep cap was reached; persistent
    negative cavity variances raise EpFailure.
    """
    m = np.asarray(m, dtype=float)
    mu, Sigma, prec, shift, conv, failed, sweeps = ep_condition_batch(
        m[None], np.asarray(K, dtype=float)[None], np.array([y_max]),
        np.array([noise_var]), damping=damping, tol=tol, max_sweeps=max_sweeps,
    )
    if failed[0]:
        raise EpFailure("EP could not refine sites (persistent negative cavity)")
    n_sites = prec.shape[1]
    act = np.ones(n_sites, dtype=bool)
    act[-1] = np.isfinite(y_max)
    sites = SiteParams(precision=prec[0], shift=shift[0], active=act)
    return EpResult(
        mean=mu[0], cov=Sigma[0], sites=sites,
        converged=bool(conv[0]), sweeps=int(sweeps[0]),
    )


def batch_entropy(cov: np.ndarray, noise_var: float) -> float:
    """Differential entropy of a Gaussian with the given covariance plus
    independent observation noise on each coordinate."""
    cov = np.atleast_2d(cov)
    k = cov.shape[0]
    sign, logdet = np.linalg.slogdet(cov + noise_var * np.eye(k))
    if sign <= 0:
        raise np.linalg.LinAlgError("noisy covariance is not positive definite")
    return 0.5 * (k * (_LOG2PI + 1.0) + logdet)


def ep_log_evidence(
    m: np.ndarray,
    K: np.ndarray,
    result: EpResult,
    y_max: float = -np.inf,
    noise_var: float = 1e-4,
) -> float:
    """EP estimate of the log probability mass of the conditioning event.

    Combines the per-site normalizers, recomputed from converged cavities,
    with the Gaussian convolution of prior and sites.
    """
    m = np.asarray(m, dtype=float)
    K = np.asarray(K, dtype=float)
    n = m.size
    C = _constraint_matrix(n)
    soft = C.shape[0] - 1
    mu, Sigma = result.mean, result.cov
    prec, shift = result.sites.precision, result.sites.shift

    idx = [q for q in range(C.shape[0]) if result.sites.active[q]]
    log_z_sites = 0.0
    for q in idx:
        c = C[q]
        v_u = float(c @ Sigma @ c)
        mu_u = float(c @ mu)
        cav_p = 1.0 / v_u - prec[q]
        if cav_p <= 0:
            raise EpFailure("negative cavity variance in evidence computation")
        tau_c = 1.0 / cav_p
        mu_c = tau_c * (mu_u / v_u - shift[q])
        s2 = noise_var if q == soft else 0.0
        a = y_max if q == soft else 0.0
        beta = (mu_c - a) / math.sqrt(tau_c + s2)
        log_zhat = float(special.log_ndtr(beta))
        tau_site = 1.0 / max(prec[q], 1e-300)
        mu_site = shift[q] * tau_site
        log_z_sites += (
            log_zhat
            + 0.5 * math.log(2.0 * math.pi * (tau_c + tau_site))
            + 0.5 * (mu_c - mu_site) ** 2 / (tau_c + tau_site)
        )

    Ca = C[idx]
    tau_sites = 1.0 / np.maximum(prec[idx], 1e-300)
    mu_sites = shift[idx] * tau_sites
    S = Ca @ K @ Ca.T + np.diag(tau_sites)
    r = mu_sites - Ca @ m
    sign, logdet = np.linalg.slogdet(S)
    if sign <= 0:
        raise EpFailure("site convolution covariance is not positive definite")
    quad = float(r @ np.linalg.solve(S, r))
    log_conv = -0.5 * (len(idx) * _LOG2PI + logdet + quad)
    return log_z_sites + log_conv
