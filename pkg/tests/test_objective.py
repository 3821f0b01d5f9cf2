"""The per-object objective, its gradient and the Lipschitz certificates."""

import numpy as np
import pytest

from cmm.em import update_covariances
from cmm.objective import (ObjectStats, discrepancies, grad_norm_bound, grad_q, lipschitz_L,
                           phi, phi_bound, phi_lipschitz, profiled_covariances, q_direct,
                           q_simplified, stats_from_weights)

from support import map_pairs, random_spd, scene_stats


def _identity_stats(mass_f=1.0, mass_g=1.0, r=2, p=1):
    return ObjectStats(mass_f, mass_g, np.zeros(r), np.zeros(p), np.eye(r), np.eye(p),
                       np.array([mass_f]), np.array([mass_g]), np.zeros((1, r)),
                       np.zeros((1, p)))


def _exact_cluster(maps, s, offsets_f, offsets_g):
    """Observations placed symmetrically so their means are exactly F(s), G(s)."""
    fc, gc = maps.f.eval(s), maps.g.eval(s)
    f = np.concatenate([fc + offsets_f, fc - offsets_f])
    g = np.concatenate([gc + offsets_g, gc - offsets_g])
    return stats_from_weights(np.ones(len(f)), np.ones(len(g)), f, g, reg=0.0)


@pytest.fixture(params=["2d", "3d"])
def maps(request):
    return map_pairs()[request.param]


class TestSimplified:
    def test_zero_at_both_means(self, maps):
        rng = np.random.default_rng(0)
        s = maps.bounds.uniform(rng, 1)[0]
        stats = _exact_cluster(maps, s, rng.normal(0, 1e-3, (5, maps.f.dim_out)),
                               rng.normal(0, 0.5, (5, 1)))
        np.testing.assert_allclose(maps.f.eval(s), stats.mean_f, rtol=1e-14)
        assert q_simplified(s, stats, maps) == pytest.approx(0.0, abs=1e-10)
        assert np.linalg.norm(grad_q(s, stats, maps)) < 1e-6

    def test_global_maximum(self, maps):
        rng = np.random.default_rng(1)
        s = maps.bounds.uniform(rng, 1)[0]
        stats = _exact_cluster(maps, s, rng.normal(0, 1e-3, (5, maps.f.dim_out)),
                               rng.normal(0, 0.5, (5, 1)))
        others = maps.bounds.uniform(rng, 500)
        assert np.all(q_simplified(others, stats, maps) <= q_simplified(s, stats, maps))

    def test_equal_masses_weight_terms_equally(self, maps):
        rng = np.random.default_rng(2)
        stats, _ = scene_stats(rng, maps)
        stats.mass_g = stats.mass_f
        s = maps.bounds.uniform(rng, 1)[0]
        df, dg = discrepancies(s, stats, maps)
        assert q_simplified(s, stats, maps) == pytest.approx(
            -stats.mass_f * (np.log1p(df) + np.log1p(dg)), rel=1e-14)

    def test_matches_direct_up_to_constant(self, maps):
        rng = np.random.default_rng(3)
        for _ in range(100):
            stats, centre = scene_stats(rng, maps)
            s1, s2 = centre + rng.normal(0, 60, (2, maps.dim))
            dd = q_direct(s1, stats, maps) - q_direct(s2, stats, maps)
            ds = q_simplified(s1, stats, maps) - q_simplified(s2, stats, maps)
            assert abs(dd - ds) <= 1e-8 * max(1.0, abs(dd))


class TestDirect:
    def test_zero_residual_direct_sum(self, maps):
        rng = np.random.default_rng(4)
        s = maps.bounds.uniform(rng, 1)[0]
        stats = _exact_cluster(maps, s, rng.normal(0, 1e-3, (6, maps.f.dim_out)),
                               rng.normal(0, 0.5, (6, 1)))
        want = 0.0
        for w, data, mean, cov in ((stats.weights_f, stats.f, stats.mean_f, stats.cov_f),
                                   (stats.weights_g, stats.g, stats.mean_g, stats.cov_g)):
            inv = np.linalg.inv(cov)
            quad = sum(wi * (x - mean) @ inv @ (x - mean) for wi, x in zip(w, data))
            want -= quad + w.sum() * np.log(np.linalg.det(cov))
        assert q_direct(s, stats, maps) == pytest.approx(want, rel=1e-10)

    def test_single_observation(self, maps):
        rng = np.random.default_rng(5)
        s = maps.bounds.uniform(rng, 1)[0]
        stats = stats_from_weights([1.0], [1.0], maps.f.eval(s)[None], maps.g.eval(s)[None])
        logdet = np.log(np.linalg.det(stats.cov_f)) + np.log(np.linalg.det(stats.cov_g))
        ridge = stats.delta_f * np.trace(np.linalg.inv(stats.cov_f)) + \
            stats.delta_g * np.trace(np.linalg.inv(stats.cov_g))
        # quadratic terms vanish; only the determinants and the ridge remain
        assert q_direct(s, stats, maps) == pytest.approx(-logdet - ridge, rel=1e-12)
        assert ridge == pytest.approx(maps.f.dim_out + 1, rel=1e-9)


class TestCovarianceUpdate:
    def test_zero_residual(self, maps):
        rng = np.random.default_rng(6)
        s = maps.bounds.uniform(rng, 1)[0]
        stats = _exact_cluster(maps, s, rng.normal(0, 1e-3, (5, maps.f.dim_out)),
                               rng.normal(0, 0.5, (5, 1)))
        cov_f, cov_g = update_covariances(s, stats, maps)
        np.testing.assert_allclose(cov_f, stats.cov_f, rtol=1e-10, atol=1e-20)
        np.testing.assert_allclose(cov_g, stats.cov_g, rtol=1e-10)

    def test_rank_one_matches_weighted_residuals(self, maps):
        rng = np.random.default_rng(7)
        stats, centre = scene_stats(rng, maps, 40)
        stats = stats_from_weights(stats.weights_f, stats.weights_g, stats.f, stats.g, reg=0.0)
        s = centre + rng.normal(0, 50, maps.dim)
        cov_f, cov_g = update_covariances(s, stats, maps)
        for cov, w, data, mp in ((cov_f, stats.weights_f, stats.f, maps.f),
                                 (cov_g, stats.weights_g, stats.g, maps.g)):
            resid = data - mp.eval(s)
            direct = (w[:, None] * resid).T @ resid / w.sum()
            assert np.abs(cov - direct).max() < 1e-10 * max(1.0, np.abs(direct).max())

    def test_determinant_lemma(self, maps):
        rng = np.random.default_rng(8)
        stats, centre = scene_stats(rng, maps)
        s = centre + rng.normal(0, 50, maps.dim)
        cov_f, cov_g = profiled_covariances(s, stats, maps)
        df, dg = discrepancies(s, stats, maps)
        assert np.linalg.det(cov_f) == pytest.approx(np.linalg.det(stats.cov_f) * (1 + df),
                                                     rel=1e-8)
        assert np.linalg.det(cov_g) == pytest.approx(np.linalg.det(stats.cov_g) * (1 + dg),
                                                     rel=1e-12)


class TestGradient:
    def test_finite_differences(self, maps):
        rng = np.random.default_rng(9)
        for _ in range(100):
            stats, _ = scene_stats(rng, maps)
            s = maps.bounds.uniform(rng, 1)[0]
            grad = grad_q(s, stats, maps)
            h = 1e-3
            num = np.array([(q_simplified(s + h * e, stats, maps)
                             - q_simplified(s - h * e, stats, maps)) / (2 * h)
                            for e in np.eye(maps.dim)])
            assert np.linalg.norm(num - grad) < 1e-5 * np.linalg.norm(grad)

    def test_norm_bound(self, maps):
        rng = np.random.default_rng(10)
        consts = maps.f.lipschitz(), maps.g.lipschitz()
        for _ in range(50):
            stats, _ = scene_stats(rng, maps)
            pts = maps.bounds.uniform(rng, 200)
            norms = np.linalg.norm(grad_q(pts, stats, maps), axis=1)
            assert np.all(norms <= grad_norm_bound(stats, *consts))

    def test_vectorized_matches_loop(self, maps):
        rng = np.random.default_rng(11)
        stats, _ = scene_stats(rng, maps)
        pts = maps.bounds.uniform(rng, 7)
        np.testing.assert_allclose(grad_q(pts, stats, maps),
                                   [grad_q(p, stats, maps) for p in pts], rtol=1e-13)


class TestLemma:
    def test_phi_bound(self):
        rng = np.random.default_rng(12)
        for dim in (1, 2, 3):
            for _ in range(50):
                mat = random_spd(rng, dim, scale=10 ** rng.uniform(-3, 3))
                v = rng.standard_normal((500, dim)) * 10 ** rng.uniform(-3, 3, (500, 1))
                assert np.all(phi(v, mat) <= phi_bound(mat) + 1e-12)

    def test_phi_lipschitz(self):
        rng = np.random.default_rng(13)
        for dim in (1, 2, 3):
            for _ in range(50):
                mat = random_spd(rng, dim, scale=10 ** rng.uniform(-2, 2))
                scale = 1 / np.sqrt(np.linalg.eigvalsh(mat)[-1])
                v1 = rng.standard_normal((500, dim)) * scale * 3
                v2 = v1 + rng.standard_normal((500, dim)) * scale * 10 ** rng.uniform(-3, 0)
                gap = np.linalg.norm(v1 - v2, axis=1)
                assert np.all(np.abs(phi(v1, mat) - phi(v2, mat)) <= phi_lipschitz(mat) * gap)


class TestLipschitzConstant:
    def test_identity_example(self):
        assert lipschitz_L(_identity_stats(), (1.0, 1.0), (1.0, 1.0)) == pytest.approx(8.0)

    def test_linear_in_mass(self):
        base = lipschitz_L(_identity_stats(1.0, 0.0), (0.7, 0.2), (0.3, 0.4))
        scaled = lipschitz_L(_identity_stats(3.5, 0.0), (0.7, 0.2), (0.3, 0.4))
        assert scaled == pytest.approx(3.5 * base, rel=1e-14)

    def test_bounds_sampled_gradient_ratios(self, maps):
        rng = np.random.default_rng(14)
        consts = maps.f.lipschitz(), maps.g.lipschitz()
        for _ in range(20):
            stats, centre = scene_stats(rng, maps)
            lip = lipschitz_L(stats, *consts)
            s1 = centre + rng.normal(0, 100, (500, maps.dim))
            s2 = s1 + rng.normal(0, 5, (500, maps.dim))
            keep = maps.contains(s1) & maps.contains(s2)
            gap = np.linalg.norm(s1 - s2, axis=1)[keep]
            diff = np.linalg.norm(grad_q(s1, stats, maps) - grad_q(s2, stats, maps), axis=1)
            assert np.all(diff[keep] <= lip * gap)
