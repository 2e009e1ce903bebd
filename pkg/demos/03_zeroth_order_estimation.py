"""Zeroth-order gradient estimation from simulated rollouts.

The estimator only sees trajectories; it perturbs the gain on a sphere of
radius r, runs finite rollouts, and averages the resulting one-point
estimates. More rollouts mean less noise — the exact gradient at K = -0.5
is -1, and the estimate tightens around it as n grows.
"""
import numpy as np

from lqrpg import (
    RolloutConfig,
    RolloutOracle,
    SeedSpec,
    estimate_gradient_covariance,
    exact_quantities,
    scalar_s1,
)

plant = scalar_s1()
K = np.array([[-0.5]])
exact = exact_quantities(plant, K)
print(f"exact gradient at K = -0.5: {exact.grad[0, 0]:+.4f}")
print(f"exact state covariance:     {exact.Sigma[0, 0]:.4f}")
print()

oracle = RolloutOracle(plant, SeedSpec(7))
for n in (100, 1000, 10000):
    cfg = RolloutConfig(n=n, l=200, r=0.05, L0=3.0)
    estimates = [
        estimate_gradient_covariance(oracle, K, cfg, run_id=rep)[0].value[0, 0]
        for rep in range(10)
    ]
    print(f"n = {n:6d} rollouts: estimate {np.mean(estimates):+.4f} "
          f"+/- {np.std(estimates):.4f}  (10 independent repetitions)")

cfg = RolloutConfig(n=2000, l=200, r=0.05, L0=3.0)
_, cov = estimate_gradient_covariance(oracle, K, cfg, run_id=99)
print()
print(f"covariance estimate at n = 2000: {cov.value[0, 0]:.4f}")
