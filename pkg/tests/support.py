"""Shared builders for the test suite."""

import numpy as np

from cmm.mappings import Box, ItdConfig, ItdMap, MapPair, StereoDomain, StereoMap
from cmm.model import ModelParams, ObservationSet
from cmm.objective import stats_from_weights
from cmm.sim import Scenario, preset_maps, simulate


def random_spd(rng, dim, scale=1.0):
    a = rng.standard_normal((dim, dim))
    return scale * (a @ a.T + 0.5 * np.eye(dim))


def random_params(rng, maps, N, r=2, p=1):
    """Valid parameters with random positions inside the search box."""
    pri_f = rng.dirichlet(np.ones(N + 1)) * 0.8 + 0.2 / (N + 1)
    pri_g = rng.dirichlet(np.ones(N + 1)) * 0.8 + 0.2 / (N + 1)
    pos = maps.bounds.uniform(rng, N)
    cov_f = np.array([np.diag([1e-4, 1e-8]) + 1e-9 * random_spd(rng, r) for _ in range(N)])
    cov_g = np.array([[[rng.uniform(0.1, 2.0)]] for _ in range(N)])
    return ModelParams(pri_f / pri_f.sum(), pri_g / pri_g.sum(), pos, cov_f, cov_g)


def small_instance(seed, n_objects=2, inliers=15, outliers=4):
    """A small random scene: objects uniform in the preset search box."""
    rng = np.random.default_rng(seed)
    maps = preset_maps()
    truth = maps.bounds.uniform(rng, n_objects)
    sigma = rng.uniform(0.5, 2.0)
    noise_f = np.tile(np.diag([(0.01 * sigma) ** 2, (1e-4 * sigma) ** 2]), (n_objects, 1, 1))
    noise_g = np.full((n_objects, 1, 1), (0.5 * sigma) ** 2)
    sc = Scenario("Custom", truth, inliers, outliers, outliers, noise_f, noise_g, seed=seed)
    obs, labels = simulate(sc, maps)
    return obs, labels, maps, sc


def toy_maps_2d():
    """2D stereo/ITD pair with small numbers, handy for hand checks."""
    stereo = StereoMap(StereoDomain(z_min=2.0), dim=2)
    itd = ItdMap(ItdConfig([-1.0, 0.0], [1.0, 0.0], c=1.0, R=1.5))
    return MapPair(stereo, itd, Box.make([-20.0, 3.0], [20.0, 40.0]))


def random_stats(rng, maps, m=12, k=9, centre=None):
    """Object statistics from observations scattered around a latent point."""
    centre = maps.bounds.uniform(rng, 1)[0] if centre is None else np.asarray(centre)
    fc, gc = maps.f.eval(centre), maps.g.eval(centre)
    f = fc + rng.standard_normal((m, fc.size)) * np.abs(fc).max() * 0.05
    g = gc + rng.standard_normal((k, gc.size)) * 0.3
    wf = rng.uniform(0.05, 1.0, m)
    wg = rng.uniform(0.05, 1.0, k)
    return stats_from_weights(wf, wg, f, g), centre


def observation_set(f, g, vol_f=10.0, vol_g=10.0):
    return ObservationSet(np.asarray(f, float), np.asarray(g, float), vol_f, vol_g)


def maps_3d():
    """3D stereo/ITD pair with microphones on the x axis."""
    stereo = StereoMap(StereoDomain(z_min=100.0), dim=3)
    itd = ItdMap(ItdConfig([-100.0, 0.0, 0.0], [100.0, 0.0, 0.0], c=1.0, R=50.0))
    return MapPair(stereo, itd, Box.make([-1000.0, -500.0, 400.0], [1000.0, 500.0, 2500.0]))


def map_pairs():
    return {"2d": preset_maps(), "3d": maps_3d()}


def scene_stats(rng, maps, count=300, sigma_f=(0.01, 1e-4), sigma_g=0.5):
    """Weighted statistics of a simulated cluster around a random latent point."""
    c = maps.bounds.uniform(rng, 1)[0]
    fc = maps.f.eval(c)
    sig = np.full(fc.size, sigma_f[0])
    sig[-1] = sigma_f[1]
    f = fc + rng.standard_normal((count, fc.size)) * sig
    g = maps.g.eval(c) + sigma_g * rng.standard_normal((count, 1))
    w_f = rng.uniform(0, 1, count)
    w_g = rng.uniform(0, 1, count)
    return stats_from_weights(w_f, w_g, f, g), c


VARIANT_NAMES = ("IPBA", "IGAA", "IVAA", "IPAA", "IAAA")


def random_fit(seed, max_em_iters=15):
    """Fit a random small instance from a random or PSC start.

    Returns ``(report, obs, maps)``.  Odd seeds start from arbitrary
    parameters, which exercises the empty-component rescue.
    """
    from cmm.em import fit
    from cmm.initialize import InitOptions, initialize
    from cmm.search import SearchOptions

    rng = np.random.default_rng(10_000 + seed)
    n_true = int(rng.integers(1, 4))
    obs, _, maps, _ = small_instance(seed, n_objects=n_true,
                                     inliers=int(rng.integers(8, 25)),
                                     outliers=int(rng.integers(0, 8)))
    N = int(rng.integers(1, 4))
    if seed % 2:
        theta0 = random_params(rng, maps, N)
    else:
        theta0 = initialize(obs, maps, N, InitOptions(), rng)
    opts = SearchOptions(variant=VARIANT_NAMES[seed % 5], max_em_iters=max_em_iters)
    return fit(obs, N, theta0, maps, opts, seed=seed), obs, maps


# acceptance tests store a one-line summary of what they measured here
ACCEPTANCE_DETAILS = {}
