import numpy as np

from ppes.gp import unit_domain
from ppes.optim import batch_ascent, maximize_scalar_field


def quad_fg(center):
    c = np.asarray(center, dtype=float)

    def fg(X):
        X = np.atleast_2d(X)
        d = X - c
        return -np.sum(d * d, axis=1), -2.0 * d

    return fg


def test_ascent_reaches_interior_maximum_from_many_starts():
    dom = unit_domain(2)
    fg = quad_fg([0.37, 0.62])
    X0 = unit_domain(2).uniform(np.random.default_rng(0), 12)
    X, v = batch_ascent(fg, X0, dom)
    assert np.max(np.abs(X - np.array([0.37, 0.62]))) < 1e-4
    assert np.all(v > -1e-7)


def test_ascent_clips_to_the_boundary_optimum():
    # concave objective with its peak outside the box: the constrained
    # optimum is the projection onto the box
    dom = unit_domain(2)
    fg = quad_fg([1.4, -0.3])
    X, v = batch_ascent(fg, np.array([[0.5, 0.5]]), dom)
    assert np.max(np.abs(X[0] - np.array([1.0, 0.0]))) < 1e-4


def test_ascent_leaves_nonfinite_starts_alone():
    dom = unit_domain(1)

    def fg(X):
        X = np.atleast_2d(X)
        v = np.where(X[:, 0] > 0.5, -((X[:, 0] - 0.8) ** 2), np.nan)
        g = np.where(X[:, 0:1] > 0.5, -2.0 * (X[:, 0:1] - 0.8), 0.0)
        return v, g

    X, v = batch_ascent(fg, np.array([[0.2], [0.6]]), dom)
    assert X[0, 0] == 0.2 and not np.isfinite(v[0])
    assert abs(X[1, 0] - 0.8) < 1e-4


def test_scalar_field_scan_and_polish_beats_grid():
    dom = unit_domain(1)

    def fg(X):
        X = np.atleast_2d(X)
        x = X[:, 0]
        return np.sin(8.0 * x) + 0.5 * x, (8.0 * np.cos(8.0 * x) + 0.5)[:, None]

    x, v = maximize_scalar_field(fg, dom, np.random.default_rng(3),
                                 n_candidates=200, n_polish=2)
    grid = np.linspace(0, 1, 10_001)
    best = np.max(np.sin(8.0 * grid) + 0.5 * grid)
    assert v >= best - 1e-6
    assert 0.0 <= x[0] <= 1.0


def test_scalar_field_uses_extra_starts():
    dom = unit_domain(1)
    # flat except for a needle the uniform scan will miss
    def fg(X):
        X = np.atleast_2d(X)
        d = X[:, 0] - 0.314159
        return -1e6 * d * d, (-2e6 * d)[:, None]

    x, v = maximize_scalar_field(fg, dom, np.random.default_rng(4),
                                 n_candidates=5, n_polish=1,
                                 extra_starts=np.array([[0.314159]]))
    assert abs(x[0] - 0.314159) < 1e-6
    assert v >= -1e-6
