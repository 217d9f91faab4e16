import numpy as np
import pytest

from ppes.gp import Dataset, GpHyper


@pytest.fixture
def hyper_2d() -> GpHyper:
    return GpHyper(signal_var=1.0, lengthscales=np.array([0.3, 0.3]), noise_var=0.01)


@pytest.fixture
def small_data_1d() -> tuple:
    """Five noisy observations of a smooth bump on [0, 1]."""
    rng = np.random.default_rng(123)
    X = np.array([[0.1], [0.35], [0.5], [0.7], [0.9]])
    f = np.exp(-0.5 * ((X.ravel() - 0.4) / 0.2) ** 2)
    y = f + 0.05 * rng.standard_normal(5)
    hyper = GpHyper(signal_var=1.0, lengthscales=np.array([0.2]), noise_var=0.0025)
    return Dataset(X, y), hyper
