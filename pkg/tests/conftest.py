import math

import numpy as np
import pytest
from scipy.linalg import expm

from qkoopman.quantum_sim import MultichannelSeries


def rotation_block(decay: float, omega: float) -> np.ndarray:
    """Real 2x2 generator with eigenvalues -decay +/- i omega."""
    return np.array([[-decay, omega], [-omega, -decay]])


def block_diag_generator(modes) -> np.ndarray:
    """Block-diagonal real generator from (decay, omega) pairs."""
    n = 2 * len(modes)
    g = np.zeros((n, n))
    for k, (decay, omega) in enumerate(modes):
        g[2 * k:2 * k + 2, 2 * k:2 * k + 2] = rotation_block(decay, omega)
    return g


def linear_series(g: np.ndarray, x0, dt: float = 0.01, n: int = 2001) -> MultichannelSeries:
    """Sample x' = G x exactly (matrix exponential) as a multichannel series."""
    step = expm(g * dt)
    x = np.empty((n, len(x0)))
    x[0] = x0
    for k in range(1, n):
        x[k] = step @ x[k - 1]
    return MultichannelSeries(dt, {f"c{i}": x[:, i] for i in range(len(x0))})


@pytest.fixture
def qho_generator():
    # the four-quadrature first-moment generator of the damped oscillator pair
    return block_diag_generator([(0.05, 2 * math.pi), (0.05, math.pi)])
