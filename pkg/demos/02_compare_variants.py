"""
M-step variants
===============

Each M-step picks a starting point (Choose) and refines it by gradient
ascent (Local Search).  Variants differ in the starting point: the previous
estimate (IP), a preimage of the visual mean (IV), the best of random
level-set and box samples (IA) or global samples only (IG); the last letter
switches the accelerated step.  From one shared start we count how many
iterations each variant needs to gain 99% of the best improvement.
"""

# %%
import numpy as np

from cmm.experiments import bench_variants, iterations_to_threshold, trace_table
from cmm.initialize import InitOptions, initialize
from cmm.search import SearchOptions
from cmm.sim import preset_maps, scenario_preset, simulate

maps = preset_maps()
obs, _ = simulate(scenario_preset("GoodSep", seed=3, inliers=100), maps)
theta0 = initialize(obs, maps, 3, InitOptions(), np.random.default_rng(3))

# %%
# likelihood_tol = 0 runs the full iteration budget, so the traces align.
opts = SearchOptions(max_em_iters=20, likelihood_tol=0.0)
reports = bench_variants(obs, maps, 3, theta0, opts, seed=3)
print(iterations_to_threshold({v: r.full_trace for v, r in reports.items()}))

# %%
names, rows = trace_table(reports)
print("iter " + " ".join(f"{n:>10}" for n in names))
for row in rows[:8]:
    print(f"{row[0]:4d} " + " ".join(f"{x:10.1f}" for x in row[1:]))
