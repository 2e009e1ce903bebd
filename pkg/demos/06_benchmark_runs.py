"""Monte Carlo benchmark runs through the experiment harness.

Builds a small noisy-gradient experiment grid (the "fig1" preset at reduced
repetition count), runs it, and summarizes each variant from the emitted
traces. The same artifacts (per-run CSVs, aggregate.csv, manifest.json) are
written under ./demo_out; outputs are byte-deterministic in the master seed.
"""
import numpy as np

from lqrpg import figure_preset, run_monte_carlo

cfg = figure_preset("fig1", repetitions=20, master_seed=0)
bundle = run_monte_carlo(cfg, out_dir="demo_out/fig1", threads=4)

print("noisy gradient descent on the 3x3 benchmark, 20 runs per variant:")
print()
for sub in bundle.sub_bundles:
    traces = sub.traces
    diverged = sum(t.diverged for t in traces)
    finals = [t.records[-1].rel_subopt for t in traces if not t.diverged]
    final = f"{np.mean(finals):.2e}" if finals else "-"
    print(f"  {sub.label:22s} diverged {diverged:2d}/{len(traces)}, "
          f"mean final rel. suboptimality {final}")
print()
print(f"artifacts written under {bundle.out_dir}/")
