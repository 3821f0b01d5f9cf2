"""
Sensor maps and step-size certificates
======================================

The stereo map sends a latent point (x, z) to (x/z, 1/z); the ITD map gives
the arrival-time difference at two microphones.  Their Lipschitz constants
bound the curvature of the per-object objective, which fixes a safe
gradient step.
"""

# %%
import numpy as np

from cmm.objective import grad_q, lipschitz_L, q_simplified, stats_from_weights
from cmm.sim import preset_maps

maps = preset_maps()
s = np.array([[-300.0, 1000.0], [500.0, 1500.0]])
print("F(s) =", maps.f.eval(s))
print("G(s) =", maps.g.eval(s).ravel())
print("stereo preimage round trip:", maps.f.preimage(maps.f.eval(s)))

# %%
# An ITD value fixes a hyperbola branch; sample it inside the search box.
rng = np.random.default_rng(0)
branch = maps.g.level_set_sample(40.0, 5, maps.bounds, rng)
print("points with ITD 40:", np.round(branch, 1), maps.g.eval(branch).ravel())

# %%
# Statistics of a noisy cluster around one object, its objective and gradient.
centre = np.array([10.0, 800.0])
f = maps.f.eval(centre) + rng.standard_normal((200, 2)) * [0.01, 1e-4]
g = maps.g.eval(centre) + 0.5 * rng.standard_normal((200, 1))
stats = stats_from_weights(np.ones(200), np.ones(200), f, g)
consts = maps.f.lipschitz(), maps.g.lipschitz()
print("map constants (L, L'):", consts)
print("gradient Lipschitz constant:", lipschitz_L(stats, *consts))
for point in ([10.0, 800.0], [60.0, 900.0]):
    print(point, q_simplified(np.array(point), stats, maps), grad_q(np.array(point), stats, maps))
