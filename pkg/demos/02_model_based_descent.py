"""Model-based optimizers side by side: gradient descent, natural gradient,
and Gauss-Newton, all started from the zero gain on the scalar benchmark.

Gauss-Newton with a half step is exact policy improvement and converges in a
handful of iterations; the natural gradient with its certified step is next;
plain gradient descent with its (much smaller) certified step is slowest but
still linear.
"""
from lqrpg import (
    StepSchedule,
    StopRule,
    run_mb_gauss_newton,
    run_mb_npg,
    run_mb_pgd,
    scalar_s1,
    solve_dare,
)

plant = scalar_s1()
K0 = [[0.0]]
stop = StopRule(max_iters=5000, rel_subopt_tol=1e-9)

runs = {
    "gradient descent (certified adaptive step)": run_mb_pgd(
        plant, K0, StepSchedule(kind="adaptive_certified"), stop
    ),
    "natural gradient (certified adaptive step)": run_mb_npg(
        plant, K0, StepSchedule(kind="adaptive_certified"), stop
    ),
    "Gauss-Newton (eta = 1/2)": run_mb_gauss_newton(plant, K0, 0.5, stop),
}

opt = solve_dare(plant)
print(f"target: C* = {opt.C_star:.9f} at K* = {opt.K_star[0, 0]:+.9f}")
print()
for name, trace in runs.items():
    final = trace.records[-1]
    print(f"{name}:")
    print(f"  {len(trace.records) - 1} iterations -> "
          f"rel. suboptimality {final.rel_subopt:.2e} "
          f"(reason: {trace.terminal_reason})")
