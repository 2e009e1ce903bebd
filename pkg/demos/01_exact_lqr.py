"""Exact average-cost LQR quantities on the scalar benchmark.

Walks through the closed-loop cost, its gradient, and the optimal solution,
and cross-checks the analytic gradient against central finite differences.
"""
import numpy as np

from lqrpg import exact_quantities, scalar_s1, solve_dare

plant = scalar_s1()

print("Scalar benchmark: x' = 0.5 x + u + w, Q = R = Sigma_w = 1")
print()

for k in (-0.5, 0.0):
    K = np.array([[k]])
    q = exact_quantities(plant, K)
    print(f"gain K = {k:+.2f}: cost C(K) = {q.cost:.6f}, "
          f"grad = {q.grad[0, 0]:+.6f}, value P = {q.P[0, 0]:.6f}, "
          f"covariance Sigma = {q.Sigma[0, 0]:.6f}")

opt = solve_dare(plant)
print()
print(f"optimal gain K* = {opt.K_star[0, 0]:+.8f}")
print(f"optimal cost C* = {opt.C_star:.8f}")

# finite-difference check of the analytic gradient
K = np.array([[-0.5]])
eps = 1e-6
fd = (exact_quantities(plant, K + eps).cost
      - exact_quantities(plant, K - eps).cost) / (2 * eps)
q = exact_quantities(plant, K)
print()
print(f"analytic gradient at K = -0.5: {q.grad[0, 0]:+.8f}")
print(f"central finite difference:      {fd:+.8f}")
print(f"difference: {abs(q.grad[0, 0] - fd):.2e}")
