"""Certified constants and sample-complexity certificates.

Everything here is computed from plant norms and a cost level — no
simulation. The perturbation constants bound how fast the cost, covariance,
and gradient can move within a trust radius; the step bounds give step sizes
with guaranteed per-iteration contraction; the certificates turn an accuracy
target (eps, delta) into concrete rollout requirements (r, l, n).

The gradient certificate's rollout count is astronomically conservative —
that is the honest content of the concentration bounds, printed as-is.
"""
from lqrpg import (
    CovErrorBudget,
    ErrorBudget,
    PlantNorms,
    covariance_certificate,
    gradient_certificate,
    npg_step_bound,
    perturbation_constants,
    pgd_step_bound,
    scalar_s1,
)

plant = scalar_s1()
norms = PlantNorms.from_plant(plant)
c = 4.0 / 3.0  # cost of the zero gain

pc = perturbation_constants(norms, c)
print(f"at cost level c = {c:.4f}:")
print(f"  trust radius          h      = {pc.h:.6f}")
print(f"  covariance Lipschitz  h_Sig  = {pc.h_sigma:.4f}")
print(f"  cost Lipschitz        h_cost = {pc.h_cost:.4f}")
print(f"  gradient Lipschitz    h_grad = {pc.h_grad:.4f}")
print()
print(f"  certified GD step:  {pgd_step_bound(norms, c):.6e}")
print(f"  certified NPG step: {npg_step_bound(norms, c):.6f}")
print()

cov_budget = CovErrorBudget.even_split(0.3, 0.2)
cov = covariance_certificate(norms, c, cov_budget, L0=3.0)
print(f"covariance estimate to accuracy 0.3 with confidence 0.8:")
print(f"  horizon  l >= {cov.l_min_prime}")
print(f"  rollouts n >= {cov.n_min_prime}")
print()

budget = ErrorBudget.even_split(0.5, 0.2)
grad = gradient_certificate(norms, c, budget, L0=3.0)
print(f"gradient estimate to accuracy 0.5 with confidence 0.8:")
print(f"  radius   r <= {grad.r_max:.3e}")
print(f"  horizon  l >= {grad.l_min}")
print(f"  rollouts n >= {max(grad.N1_raw, grad.N2_raw):.3e}   "
      f"(not runnable; the bound is what it is)")
