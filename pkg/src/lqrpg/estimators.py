"""Model-free gradient and covariance estimators.

All three estimators talk to the plant only through a
:class:`~lqrpg.sim.RolloutOracle`: perturb the gain on the Frobenius sphere,
roll out, average. Overflowed rollouts mark the whole estimate failed rather
than being dropped, since dropping them would bias the estimator exactly in
the high-noise regime of interest.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .sim import Purpose, RolloutConfig, RolloutOracle

__all__ = [
    "GradientEstimate",
    "CovarianceEstimate",
    "BaselineEstimate",
    "estimate_gradient_covariance",
    "estimate_baseline",
    "estimate_gradient_vr",
    "estimator_diagnostics",
    "EstimatorDiagnostics",
]


@dataclass(frozen=True)
class GradientEstimate:
    value: np.ndarray  # (n_u, n_x)
    n_used: int
    l_used: int
    r_used: float
    run_id: int
    failed: bool = False
    failed_rollout: int | None = None
    per_rollout_terms: np.ndarray | None = None  # (n, n_u, n_x) when retained
    rollout_costs: np.ndarray | None = None


@dataclass(frozen=True)
class CovarianceEstimate:
    value: np.ndarray  # (n_x, n_x)
    n_used: int
    l_used: int
    r_used: float
    run_id: int
    failed: bool = False
    failed_rollout: int | None = None


@dataclass(frozen=True)
class BaselineEstimate:
    value: float
    n_v_used: int
    x0: np.ndarray
    failed: bool = False


def _draw_perturbations(
    oracle: RolloutOracle, r: float, n: int, run_id: int
) -> np.ndarray:
    U = np.empty((n, oracle.n_u, oracle.n_x))
    for k in range(n):
        U[k] = oracle.draw_perturbation(r, run_id, k)
    return U


def _draw_initial_states(oracle: RolloutOracle, n: int, run_id: int) -> np.ndarray:
    x0 = np.empty((n, oracle.n_x))
    for k in range(n):
        x0[k] = oracle.draw_initial_state(run_id, k)
    return x0


def estimate_gradient_covariance(
    oracle: RolloutOracle,
    K: np.ndarray,
    cfg: RolloutConfig,
    run_id: int = 0,
    keep_terms: bool = False,
) -> tuple[GradientEstimate, CovarianceEstimate]:
    """Two-sided sphere estimator of grad C(K) and Sigma_K.

    For each of n rollouts: perturb K by U_k with ||U_k||_F = r, roll out l
    steps from a bounded initial state, and average
    (n_x n_u / r^2) * C_hat_k * U_k for the gradient and the empirical state
    covariance for Sigma. The dimension multiplier is n_x * n_u.
    """
    K = np.asarray(K, dtype=float)
    d = oracle.n_x * oracle.n_u
    U = _draw_perturbations(oracle, cfg.r, cfg.n, run_id)
    x0s = _draw_initial_states(oracle, cfg.n, run_id)
    states, overflow = oracle.rollout_batch(
        K[None, :, :] + U, x0s, cfg.l, run_id, range(cfg.n), Purpose.NOISE
    )
    meta = dict(n_used=cfg.n, l_used=cfg.l, r_used=cfg.r, run_id=run_id)
    if np.any(overflow >= 0):
        bad = int(np.argmax(overflow >= 0))
        nanm = np.full((oracle.n_u, oracle.n_x), np.nan)
        nans = np.full((oracle.n_x, oracle.n_x), np.nan)
        return (
            GradientEstimate(value=nanm, failed=True, failed_rollout=bad, **meta),
            CovarianceEstimate(value=nans, failed=True, failed_rollout=bad, **meta),
        )
    costs = np.array(
        [oracle.stage_cost(states[k], K + U[k]) for k in range(cfg.n)]
    )
    terms = (d / cfg.r**2) * costs[:, None, None] * U
    grad = terms.mean(axis=0)
    cov = np.einsum("kti,ktj->ij", states, states) / (cfg.n * cfg.l)
    cov = 0.5 * (cov + cov.T)
    return (
        GradientEstimate(
            value=grad,
            per_rollout_terms=terms if keep_terms else None,
            rollout_costs=costs if keep_terms else None,
            **meta,
        ),
        CovarianceEstimate(value=cov, **meta),
    )


def estimate_baseline(
    oracle: RolloutOracle,
    K: np.ndarray,
    x0: np.ndarray,
    n_v: int,
    l: int,
    run_id: int = 0,
    rollout_base: int = 0,
) -> BaselineEstimate:
    """Average finite-horizon cost of n_v unperturbed rollouts from one x0.

    Estimates the state-dependent baseline used for variance reduction.
    Baseline rollouts draw from dedicated noise substreams starting at
    ``rollout_base`` so they never collide with the main rollouts.
    """
    if n_v < 1:
        raise ConfigurationError(f"n_v must be >= 1, got {n_v}")
    K = np.asarray(K, dtype=float)
    x0 = np.asarray(x0, dtype=float).reshape(oracle.n_x)
    Ks = np.broadcast_to(K, (n_v, *K.shape))
    x0s = np.broadcast_to(x0, (n_v, oracle.n_x))
    ids = range(rollout_base, rollout_base + n_v)
    states, overflow = oracle.rollout_batch(Ks, x0s, l, run_id, ids, Purpose.BASELINE)
    if np.any(overflow >= 0):
        return BaselineEstimate(value=np.nan, n_v_used=n_v, x0=x0, failed=True)
    costs = [oracle.stage_cost(states[j], K) for j in range(n_v)]
    return BaselineEstimate(value=float(np.mean(costs)), n_v_used=n_v, x0=x0)


def estimate_gradient_vr(
    oracle: RolloutOracle,
    K: np.ndarray,
    cfg: RolloutConfig,
    n_v: int,
    run_id: int = 0,
    keep_terms: bool = False,
) -> GradientEstimate:
    """Variance-reduced sphere estimator: subtract a per-initial-state
    baseline from each rollout cost before averaging.

    cfg.n plays the role of the outer rollout count; each outer rollout
    estimates its own baseline from n_v unperturbed rollouts started at the
    same initial state.
    """
    K = np.asarray(K, dtype=float)
    d = oracle.n_x * oracle.n_u
    n_b = cfg.n
    x0s = _draw_initial_states(oracle, n_b, run_id)
    U = _draw_perturbations(oracle, cfg.r, n_b, run_id)

    # All baseline rollouts in one batch: outer rollout k owns baseline
    # substreams [k*n_v, (k+1)*n_v).
    Ks_base = np.broadcast_to(K, (n_b * n_v, *K.shape))
    x0s_base = np.repeat(x0s, n_v, axis=0)
    b_states, b_overflow = oracle.rollout_batch(
        Ks_base, x0s_base, cfg.l, run_id, range(n_b * n_v), Purpose.BASELINE
    )
    meta = dict(n_used=n_b, l_used=cfg.l, r_used=cfg.r, run_id=run_id)
    if np.any(b_overflow >= 0):
        bad = int(np.argmax(b_overflow >= 0)) // n_v
        return GradientEstimate(
            value=np.full((oracle.n_u, oracle.n_x), np.nan),
            failed=True, failed_rollout=bad, **meta,
        )
    b_costs = np.array(
        [oracle.stage_cost(b_states[j], K) for j in range(n_b * n_v)]
    )
    baselines = b_costs.reshape(n_b, n_v).mean(axis=1)

    states, overflow = oracle.rollout_batch(
        K[None, :, :] + U, x0s, cfg.l, run_id, range(n_b), Purpose.NOISE
    )
    if np.any(overflow >= 0):
        bad = int(np.argmax(overflow >= 0))
        return GradientEstimate(
            value=np.full((oracle.n_u, oracle.n_x), np.nan),
            failed=True, failed_rollout=bad, **meta,
        )
    costs = np.array(
        [oracle.stage_cost(states[k], K + U[k]) for k in range(n_b)]
    )
    terms = (d / cfg.r**2) * (costs - baselines)[:, None, None] * U
    return GradientEstimate(
        value=terms.mean(axis=0),
        per_rollout_terms=terms if keep_terms else None,
        rollout_costs=costs if keep_terms else None,
        **meta,
    )


@dataclass(frozen=True)
class EstimatorDiagnostics:
    mean: np.ndarray
    componentwise_variance: np.ndarray
    frobenius_errors: np.ndarray | None
    mean_frobenius_error: float | None


def estimator_diagnostics(
    estimates, reference: np.ndarray | None = None
) -> EstimatorDiagnostics:
    """Sample mean and unbiased component-wise variance of a batch of
    gradient estimates, with Frobenius errors against an optional exact
    reference."""
    values = [e.value for e in estimates if not e.failed]
    if not values:
        raise ConfigurationError("no successful estimates to summarize")
    stack = np.stack(values)
    mean = stack.mean(axis=0)
    if len(values) > 1:
        var = stack.var(axis=0, ddof=1)
    else:
        var = np.zeros_like(mean)
    errors = None
    mean_err = None
    if reference is not None:
        errors = np.array([np.linalg.norm(v - reference, "fro") for v in values])
        mean_err = float(errors.mean())
    return EstimatorDiagnostics(
        mean=mean,
        componentwise_variance=var,
        frobenius_errors=errors,
        mean_frobenius_error=mean_err,
    )
