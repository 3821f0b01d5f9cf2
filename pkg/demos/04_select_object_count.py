"""
How many objects?
=================

The number of objects is chosen by fitting N = 1..5 and minimizing the
score -2 L + D_N log(M + K), where D_N counts free parameters.
"""

# %%
import numpy as np

from cmm.select import model_dimension, select_n
from cmm.sim import preset_maps, scenario_preset, simulate

maps = preset_maps()
obs, _ = simulate(scenario_preset("PoorPrec", seed=2, inliers=100), maps)
print("parameters per object:", model_dimension(1, d=2, r=2, p=1))

# %%
best, scores = select_n(obs, maps, 5, rng=np.random.default_rng(2))
for s in scores:
    print(f"N={s.n_components}: loglik {s.loglik:9.1f}  dim {s.dim:2d}  score {s.score:9.1f}")
print("selected N =", best)
