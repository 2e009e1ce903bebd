"""Variance reduction via a baseline cost estimate.

The plain one-point estimator multiplies the whole rollout cost by the
perturbation direction, so its variance scales with the squared cost. The
variance-reduced estimator subtracts a baseline (an unperturbed cost
estimate) first. With paired perturbation and noise seeds the comparison is
exact: same directions, same trajectories, only the centering differs.
"""
import numpy as np

from lqrpg import (
    RolloutConfig,
    RolloutOracle,
    SeedSpec,
    estimate_gradient_covariance,
    estimate_gradient_vr,
    scalar_s1,
)

plant = scalar_s1()
K = np.array([[-0.5]])
cfg = RolloutConfig(n=300, l=100, r=0.1, L0=3.0)
oracle = RolloutOracle(plant, SeedSpec(3))

plain, _ = estimate_gradient_covariance(oracle, K, cfg, keep_terms=True)
vr = estimate_gradient_vr(oracle, K, cfg, n_v=20, keep_terms=True)

v_plain = plain.per_rollout_terms.var(ddof=1)
v_vr = vr.per_rollout_terms.var(ddof=1)

print(f"plain estimator:            mean {plain.value[0, 0]:+.3f}, "
      f"per-term variance {v_plain:9.2f}")
print(f"variance-reduced estimator: mean {vr.value[0, 0]:+.3f}, "
      f"per-term variance {v_vr:9.2f}")
print()
print(f"variance ratio (paired seeds): {v_plain / v_vr:.1f}x")
