"""Benchmark objectives on the unit hypercube, as maximization problems with
additive Gaussian observation noise: Branin-Hoo, a mixture of cosines, a
10-mode Shekel restricted to two coordinates, Hartmann-6, and a rocket
flight-time simulator with a return/no-return discontinuity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Objective",
    "make_synthetic",
    "make_rocket",
    "objective_by_name",
    "rocket_flight_time",
    "observe",
]


@dataclass(frozen=True)
class Objective:
    name: str
    dim: int
    _vec: callable = field(repr=False)
    noise_sd: float = 0.1
    known_max: float | None = None
    known_argmax: tuple | None = None

    def evaluate(self, x: np.ndarray) -> float:
        return float(self._vec(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self._vec(np.atleast_2d(np.asarray(X, dtype=float))), dtype=float)


def observe(obj: Objective, x: np.ndarray, rng: np.random.Generator) -> float:
    """Noisy observation: evaluate(x) plus a N(0, noise_sd^2) draw."""
    return obj.evaluate(x) + obj.noise_sd * rng.standard_normal()


# ---------------------------------------------------------------------------
# Synthetic functions (standard forms, sign-flipped to maximization, domains
# affinely mapped to [0,1]^D).


def _branin_vec(U: np.ndarray) -> np.ndarray:
    x1 = -5.0 + 15.0 * U[:, 0]
    x2 = 15.0 * U[:, 1]
    a, b, c = 1.0, 5.1 / (4.0 * math.pi**2), 5.0 / math.pi
    r, s, t = 6.0, 10.0, 1.0 / (8.0 * math.pi)
    val = a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1.0 - t) * np.cos(x1) + s
    return -val


def _cosines_vec(U: np.ndarray) -> np.ndarray:
    u = 1.6 * U[:, 0] - 0.5
    v = 1.6 * U[:, 1] - 0.5
    g = u**2 + v**2 - 0.3 * np.cos(3.0 * math.pi * u) - 0.3 * np.cos(3.0 * math.pi * v)
    return 1.0 - g


_SHEKEL_A = np.array(
    [
        [4.0, 4.0, 4.0, 4.0],
        [1.0, 1.0, 1.0, 1.0],
        [8.0, 8.0, 8.0, 8.0],
        [6.0, 6.0, 6.0, 6.0],
        [3.0, 7.0, 3.0, 7.0],
        [2.0, 9.0, 2.0, 9.0],
        [5.0, 5.0, 3.0, 3.0],
        [8.0, 1.0, 8.0, 1.0],
        [6.0, 2.0, 6.0, 2.0],
        [7.0, 3.0, 7.0, 3.0],
    ]
)
_SHEKEL_C = np.array([0.1, 0.2, 0.2, 0.4, 0.4, 0.6, 0.3, 0.7, 0.5, 0.5])
# The last two coordinates of the standard 4-D function are pinned at the
# optimum location (4, 4); their squared offsets fold into the denominators.
_SHEKEL_D = (4.0 - _SHEKEL_A[:, 2]) ** 2 + (4.0 - _SHEKEL_A[:, 3]) ** 2


def _shekel10_vec(U: np.ndarray) -> np.ndarray:
    X = 10.0 * U
    sq = (
        (X[:, 0, None] - _SHEKEL_A[None, :, 0]) ** 2
        + (X[:, 1, None] - _SHEKEL_A[None, :, 1]) ** 2
    )
    return np.sum(1.0 / (sq + _SHEKEL_D[None, :] + _SHEKEL_C[None, :]), axis=1)


_HART6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HART6_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_HART6_P = 1e-4 * np.array(
    [
        [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
        [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
        [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
        [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
    ]
)


def _hartmann6_vec(U: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,bij->bi", _HART6_A, (U[:, None, :] - _HART6_P[None, :, :]) ** 2)
    return np.exp(-sq) @ _HART6_ALPHA


_BRANIN_MAX = -0.39788735772973816
_BRANIN_ARGMAX = (
    ((math.pi + 5.0) / 15.0, 2.275 / 15.0),
    ((-math.pi + 5.0) / 15.0, 12.275 / 15.0),
    ((9.42478 + 5.0) / 15.0, 2.475 / 15.0),
)
_COSINES_MAX = 1.6
_COSINES_ARGMAX = ((0.3125, 0.3125),)
# Local ascent from the dominant mode of the restricted Shekel sum, verified
# against a dense random scan in the tests.
_SHEKEL10_MAX = 10.532016561847609
_SHEKEL10_ARGMAX = ((0.40007328, 0.40005801),)
_HART6_MAX = 3.32236801141551
_HART6_ARGMAX = (
    (0.20168952, 0.15001069, 0.47687398, 0.27533243, 0.31165162, 0.65730054),
)

_SYNTHETIC = {
    "branin": (2, _branin_vec, _BRANIN_MAX, _BRANIN_ARGMAX),
    "cosines": (2, _cosines_vec, _COSINES_MAX, _COSINES_ARGMAX),
    "shekel10": (2, _shekel10_vec, _SHEKEL10_MAX, _SHEKEL10_ARGMAX),
    "hartmann6": (6, _hartmann6_vec, _HART6_MAX, _HART6_ARGMAX),
}


def make_synthetic(name: str, noise_sd: float = 0.1) -> Objective:
    """Standard benchmark by name: branin, cosines, shekel10, or hartmann6."""
    if name not in _SYNTHETIC:
        raise ValueError(f"unknown synthetic objective {name!r}")
    dim, vec, fmax, argmax = _SYNTHETIC[name]
    return Objective(
        name=name, dim=dim, _vec=vec, noise_sd=noise_sd,
        known_max=fmax, known_argmax=argmax,
    )


# ---------------------------------------------------------------------------
# Rocket flight-time simulator.
#
# A 2-D point mass launches from a tower of height h at a fixed thrust angle,
# burns fuel at a constant rate with constant exhaust velocity (so thrust is
# constant while fuel lasts and mass depletes linearly), then flies
# ballistically under constant gravity without drag.  The flight ends when
# altitude returns to ground level; climbing faster than the radial speed
# limit, or failing to land before the time cap, counts as not returning and
# scores 0.

ROCKET_DRY_MASS = 1.0  # kg
ROCKET_BURN_RATE = 1.0  # kg/s
ROCKET_EXHAUST_VELOCITY = 1200.0  # m/s; thrust = burn rate * exhaust velocity
ROCKET_G = 9.81  # m/s^2
ROCKET_DT = 0.01  # s, RK4 step
ROCKET_TIME_CAP = 600.0  # s
ROCKET_RADIAL_SPEED_LIMIT = 2000.0  # m/s upward => treated as escaped
ROCKET_HEIGHT_MAX = 100.0  # m, x[0] in [0,1] maps to [0, 100]
ROCKET_FUEL_MAX = 10.0  # kg, x[1] maps to [0, 10]
# x[2] maps the launch angle to [0, 90] degrees from horizontal.

# The flight-time supremum sits at full tower height and full fuel with the
# launch angle at the escape boundary: sin(a) = (2000 + g*mf) / (ve*ln(1+mf))
# gives burn-end climb speed exactly at the limit, burn altitude 6261 m, and
# total time 420.854 s.  The boundary is open (at the limit the flight scores
# 0), so every simulated flight stays below; 421.0 adds a safety margin.
_ROCKET_MAX = 421.0


def rocket_flight_time(x: np.ndarray) -> float:
    """Total flight time in seconds until the rocket falls back to ground
    level, or 0 if it never lifts off or never returns."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != 3:
        raise ValueError("rocket input must have 3 coordinates")
    h0 = ROCKET_HEIGHT_MAX * x[0]
    fuel = ROCKET_FUEL_MAX * x[1]
    angle = 0.5 * math.pi * x[2]
    ca, sa = math.cos(angle), math.sin(angle)
    thrust = ROCKET_EXHAUST_VELOCITY * ROCKET_BURN_RATE
    t_burn = fuel / ROCKET_BURN_RATE
    m0 = ROCKET_DRY_MASS + fuel

    def deriv(t, s):
        vx, vz = s[2], s[3]
        if t < t_burn:
            m = m0 - ROCKET_BURN_RATE * t
            ax = thrust * ca / m
            az = thrust * sa / m - ROCKET_G
        else:
            ax, az = 0.0, -ROCKET_G
        return np.array([vx, vz, ax, az])

    s = np.array([0.0, h0, 0.0, 0.0])
    t = 0.0
    max_alt = h0
    while t < ROCKET_TIME_CAP:
        dt = ROCKET_DT
        if t < t_burn and t + dt > t_burn:
            dt = t_burn - t
            if dt < 1e-12:
                dt = ROCKET_DT
        k1 = deriv(t, s)
        k2 = deriv(t + 0.5 * dt, s + 0.5 * dt * k1)
        k3 = deriv(t + 0.5 * dt, s + 0.5 * dt * k2)
        k4 = deriv(t + dt, s + dt * k3)
        s_new = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_new = t + dt
        if s_new[3] > ROCKET_RADIAL_SPEED_LIMIT:
            return 0.0
        if s_new[1] <= 0.0:
            if max_alt <= 1e-9:
                return 0.0
            z0, z1 = s[1], s_new[1]
            frac = z0 / (z0 - z1) if z0 > z1 else 1.0
            return t + frac * dt
        max_alt = max(max_alt, s_new[1])
        s, t = s_new, t_new
    return 0.0


def make_rocket(noise_sd: float = 0.1) -> Objective:
    def vec(X):
        return np.array([rocket_flight_time(row) for row in X])

    return Objective(
        name="rocket", dim=3, _vec=vec, noise_sd=noise_sd,
        known_max=_ROCKET_MAX, known_argmax=None,
    )


def objective_by_name(name: str, noise_sd: float = 0.1) -> Objective:
    if name == "rocket":
        return make_rocket(noise_sd)
    return make_synthetic(name, noise_sd)
