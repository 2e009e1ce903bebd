"""Exact model-based quantities for the average-cost LQR.

Everything here is deterministic linear algebra: discrete Lyapunov solves,
the closed-loop cost/gradient identities, the Riccati fixed point, and exact
finite-horizon truncations. These functions serve as oracles for the
sampling-based estimators elsewhere in the package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InstabilityError, NumericError
from .plants import PlantModel, closed_loop, smallest_eigenvalue

__all__ = [
    "solve_discrete_lyapunov",
    "ClosedLoopQuantities",
    "exact_quantities",
    "OptimalSolution",
    "solve_dare",
    "gradient_domination_mu",
    "finite_horizon_quantities",
]

# Above this state dimension the vectorized Kronecker solve becomes costly;
# fall back to fixed-point iteration.
_KRON_MAX_DIM = 32


def _symmetrize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def solve_discrete_lyapunov(M: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Solve X = M X M' + W for Schur-stable M.

    Uses the vectorized linear system (I - M (x) M) vec(X) = vec(W) at desk
    scale, and fixed-point iteration beyond ``_KRON_MAX_DIM``. The result is
    symmetrized and checked to residual 1e-10 * max(1, ||W||_F).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    n = M.shape[0]
    if M.shape != (n, n) or W.shape != (n, n):
        raise NumericError(f"incompatible shapes {M.shape}, {W.shape}")
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(W))):
        raise NumericError("non-finite entries in Lyapunov data")
    rho = float(np.max(np.abs(np.linalg.eigvals(M))))
    if rho >= 1.0:
        raise InstabilityError(
            f"spectral radius {rho:.6g} >= 1: Lyapunov series diverges",
            spectral_radius=rho,
        )

    if n <= _KRON_MAX_DIM:
        lhs = np.eye(n * n) - np.kron(M, M)
        x = np.linalg.solve(lhs, W.reshape(n * n, order="F"))
        X = x.reshape((n, n), order="F")
    else:
        X = W.copy()
        term = W.copy()
        for _ in range(200_000):
            term = M @ term @ M.T
            X += term
            if np.linalg.norm(term, "fro") <= 1e-12 * max(1.0, np.linalg.norm(X, "fro")):
                break
        else:
            raise ConvergenceError("Lyapunov fixed point did not converge")

    X = _symmetrize(X)
    resid = np.linalg.norm(X - M @ X @ M.T - W, "fro")
    if resid > 1e-10 * max(1.0, np.linalg.norm(W, "fro")):
        raise NumericError(f"Lyapunov residual {resid:.3e} above tolerance")
    return X


@dataclass(frozen=True)
class ClosedLoopQuantities:
    """Exact P_K, Sigma_K, E_K, cost, and gradient for a stabilizing gain."""

    P: np.ndarray
    Sigma: np.ndarray
    E: np.ndarray
    cost: float
    grad: np.ndarray


def exact_quantities(plant: PlantModel, K: np.ndarray) -> ClosedLoopQuantities:
    """Compute the closed-loop value matrix, average covariance, cost, and
    gradient for a stabilizing gain.

    P solves P = Q_K + A_K' P A_K, Sigma solves Sigma = Sigma_w + A_K Sigma A_K',
    E = (R + B'PB)K + B'PA, cost = Tr(P Sigma_w), grad = 2 E Sigma.
    """
    K = plant.check_gain(K)
    A_K, rep = closed_loop(plant, K)
    if not rep.is_stabilizing:
        raise InstabilityError(
            f"gain is not stabilizing (spectral radius {rep.spectral_radius:.6g})",
            spectral_radius=rep.spectral_radius,
        )
    Q_K = plant.Q + K.T @ plant.R @ K
    P = solve_discrete_lyapunov(A_K.T, Q_K)
    Sigma = solve_discrete_lyapunov(A_K, plant.Sigma_w)
    E = (plant.R + plant.B.T @ P @ plant.B) @ K + plant.B.T @ P @ plant.A
    cost = float(np.trace(P @ plant.Sigma_w))
    grad = 2.0 * E @ Sigma
    return ClosedLoopQuantities(P=P, Sigma=Sigma, E=E, cost=cost, grad=grad)


@dataclass(frozen=True)
class OptimalSolution:
    """Optimal gain and associated value matrix, covariance, and cost."""

    K_star: np.ndarray
    P_star: np.ndarray
    Sigma_star: np.ndarray
    C_star: float


def solve_dare(
    plant: PlantModel, tol: float = 1e-12, max_iter: int = 100_000
) -> OptimalSolution:
    """Riccati fixed point by value iteration from P = Q.

    Iterates P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA until the relative
    Frobenius update falls below ``tol``. Value iteration needs no initial
    stabilizing gain, which matters for unstable open-loop plants.
    """
    A, B, Q, R = plant.A, plant.B, plant.Q, plant.R
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        G = R + BtP @ B
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(G, BtP @ A)
        P_next = _symmetrize(P_next)
        resid = np.linalg.norm(P_next - P, "fro")
        P = P_next
        if resid <= tol * max(np.linalg.norm(P, "fro"), np.finfo(float).tiny):
            break
    else:
        raise ConvergenceError(
            f"Riccati iteration did not converge in {max_iter} iterations",
            residual=resid,
        )
    G = R + B.T @ P @ B
    K_star = -np.linalg.solve(G, B.T @ P @ A)
    Sigma_star = solve_discrete_lyapunov(A + B @ K_star, plant.Sigma_w)
    C_star = float(np.trace(P @ plant.Sigma_w))
    return OptimalSolution(K_star=K_star, P_star=P, Sigma_star=Sigma_star, C_star=C_star)


def gradient_domination_mu(plant: PlantModel) -> float:
    """Constant mu in the gradient-domination inequality
    C(K) - C(K*) <= mu * ||grad C(K)||_F^2.

    mu = (1/4) ||Sigma_{K*}|| ||Sigma_w^{-2}|| ||R^{-1}||.
    """
    opt = solve_dare(plant)
    norm_sigma_star = float(np.linalg.norm(opt.Sigma_star, 2))
    sw_inv = np.linalg.inv(plant.Sigma_w)
    norm_sw_inv2 = float(np.linalg.norm(sw_inv @ sw_inv, 2))
    norm_r_inv = float(np.linalg.norm(np.linalg.inv(plant.R), 2))
    return 0.25 * norm_sigma_star * norm_sw_inv2 * norm_r_inv


def finite_horizon_quantities(
    plant: PlantModel, K: np.ndarray, l: int
) -> tuple[np.ndarray, float]:
    """Exact l-step averages (Sigma_K^(l), C^(l)) via the covariance recursion
    Sigma_{t+1} = A_K Sigma_t A_K' + Sigma_w from Sigma_0. No sampling."""
    if l < 1:
        raise NumericError(f"horizon must be >= 1, got {l}")
    K = plant.check_gain(K)
    A_K, rep = closed_loop(plant, K)
    if not rep.is_stabilizing:
        raise InstabilityError(
            f"gain is not stabilizing (spectral radius {rep.spectral_radius:.6g})",
            spectral_radius=rep.spectral_radius,
        )
    Q_K = plant.Q + K.T @ plant.R @ K
    Sigma_t = plant.Sigma_0.copy()
    acc = Sigma_t.copy()
    for _ in range(l - 1):
        Sigma_t = A_K @ Sigma_t @ A_K.T + plant.Sigma_w
        acc += Sigma_t
    Sigma_l = _symmetrize(acc / l)
    C_l = float(np.trace(Q_K @ Sigma_l))
    return Sigma_l, C_l
