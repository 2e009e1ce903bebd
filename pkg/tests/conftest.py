"""Shared fixtures and random problem generators."""
from __future__ import annotations

import numpy as np
import pytest

from lqrpg import PlantModel, solve_dare


def random_plant(rng: np.random.Generator, n_x: int | None = None,
                 n_u: int | None = None) -> PlantModel:
    """A random well-conditioned plant with positive-definite weights."""
    n_x = n_x or int(rng.integers(1, 5))
    n_u = n_u or int(rng.integers(1, n_x + 1))
    A = rng.normal(scale=0.6, size=(n_x, n_x))
    B = rng.normal(scale=1.0, size=(n_x, n_u))
    # Guard against (numerically) uncontrollable B.
    B += 0.3 * np.sign(B + 1e-12)

    def spd(n, lo=0.5, hi=1.5):
        M = rng.normal(size=(n, n))
        return M @ M.T + lo * np.eye(n) + (hi - lo) * rng.random() * np.eye(n)

    return PlantModel(A=A, B=B, Q=spd(n_x), R=spd(n_u),
                      Sigma_w=spd(n_x), Sigma_0=spd(n_x))


def random_stabilizing_gain(plant: PlantModel, rng: np.random.Generator,
                            spread: float = 0.2) -> np.ndarray:
    """Optimal gain plus a perturbation kept inside the stability region."""
    K_star = solve_dare(plant).K_star
    for _ in range(100):
        K = K_star + spread * rng.normal(size=K_star.shape)
        rho = np.max(np.abs(np.linalg.eigvals(plant.A + plant.B @ K)))
        if rho < 0.98:
            return K
        spread *= 0.5
    return K_star


@pytest.fixture
def rng():
    return np.random.default_rng(20250826)
