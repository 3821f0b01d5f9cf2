"""Acceptance criteria A1-A9.

The expensive experiments run once per session in fixtures; each test then
checks one criterion, stores a one-line summary in ``ACCEPTANCE_DETAILS``
and the terminal summary prints a PASS/FAIL line per criterion.
"""

import time

import numpy as np
import pytest

from cmm.em import fit
from cmm.experiments import bench_variants, iterations_to_threshold, pooled_standard_error
from cmm.initialize import InitOptions, initialize
from cmm.mappings import stereo_eval, stereo_jacobian, stereo_preimage
from cmm.model import log_likelihood
from cmm.objective import (grad_norm_bound, grad_q, lipschitz_L, phi, phi_bound, phi_lipschitz,
                           q_direct, q_simplified)
from cmm.search import SearchOptions
from cmm.select import select_n
from cmm.sim import PRESETS, error_report, preset_maps, scenario_preset, simulate

from support import ACCEPTANCE_DETAILS, map_pairs, random_fit, scene_stats

SEEDS = range(10)


@pytest.fixture(scope="session")
def preset():
    return preset_maps()


@pytest.fixture(scope="session")
def goodsep_fits(preset):
    """IAAA from a PSC start on ten GoodSep datasets."""
    start = time.perf_counter()
    errors, traces = [], []
    truth = scenario_preset("GoodSep").truth
    for seed in SEEDS:
        obs, _ = simulate(scenario_preset("GoodSep", seed=seed), preset)
        theta0 = initialize(obs, preset, 3, InitOptions(strategy="PSC"),
                            np.random.default_rng(seed))
        rep = fit(obs, 3, theta0, preset, SearchOptions(variant="IAAA"), seed=seed)
        errors.append(error_report(rep.params, truth, preset).rel_s)
        traces.append(rep.full_trace)
    return np.array(errors), traces, time.perf_counter() - start


@pytest.fixture(scope="session")
def selections(preset):
    """BIC sweeps ``N = 1..5`` on every preset scene and seed."""
    start = time.perf_counter()
    chosen, traces = {}, []
    for name in PRESETS:
        chosen[name] = []
        for seed in SEEDS:
            obs, _ = simulate(scenario_preset(name, seed=seed), preset)
            best, _ = select_n(obs, preset, 5, rng=np.random.default_rng(seed),
                               on_fit=lambda N, rep: traces.append(rep.full_trace))
            chosen[name].append(best)
    return chosen, traces, time.perf_counter() - start


@pytest.fixture(scope="session")
def variant_runs(preset):
    """IAAA, IPAA and IPBA from one shared start, full 70 iterations."""
    counts, traces = [], []
    opts = SearchOptions(likelihood_tol=0.0)
    for seed in SEEDS:
        obs, _ = simulate(scenario_preset("GoodSep", seed=seed), preset)
        theta0 = initialize(obs, preset, 3, InitOptions(), np.random.default_rng(seed))
        reports = bench_variants(obs, preset, 3, theta0, opts, seed=seed,
                                 variants=("IAAA", "IPAA", "IPBA"))
        full = {v: r.full_trace for v, r in reports.items()}
        counts.append(iterations_to_threshold(full))
        traces.extend(full.values())
    return counts, traces


@pytest.mark.acceptance("A1")
def test_a1_goodsep_localization(goodsep_fits):
    errors, _, elapsed = goodsep_fits
    good = int(np.sum(np.all(errors <= 5e-2, axis=1)))
    ACCEPTANCE_DETAILS["A1"] = (f"{good}/10 runs within 5e-2 (worst per run "
                                f"{np.round(errors.max(axis=1), 4).tolist()}), {elapsed:.1f}s")
    assert good >= 9
    assert elapsed < 30


@pytest.mark.acceptance("A2")
@pytest.mark.slow
def test_a2_bic_selection(selections):
    chosen, _, elapsed = selections
    hits = {name: sum(n == 3 for n in picks) for name, picks in chosen.items()}
    ACCEPTANCE_DETAILS["A2"] = (", ".join(f"{k} {v}/10" for k, v in hits.items())
                                + f" select N=3, {elapsed:.0f}s")
    assert all(v >= 9 for v in hits.values()), chosen
    assert elapsed < 300


@pytest.mark.acceptance("A3")
@pytest.mark.slow
def test_a3_variant_ordering(variant_runs):
    counts, _ = variant_runs
    ordered = sum(c["IAAA"] <= c["IPAA"] <= c["IPBA"] for c in counts)
    ACCEPTANCE_DETAILS["A3"] = (f"IAAA <= IPAA <= IPBA in {ordered}/10 seeds "
                                f"(IAAA/IPAA/IPBA: "
                                f"{[(c['IAAA'], c['IPAA'], c['IPBA']) for c in counts]})")
    assert ordered >= 8


@pytest.mark.acceptance("A4")
@pytest.mark.slow
def test_a4_init_comparison(preset):
    failures = []
    margins = []
    for name in PRESETS:
        values = {s: {N: [] for N in range(1, 6)} for s in ("OSC", "PSC")}
        for seed in SEEDS:
            obs, _ = simulate(scenario_preset(name, seed=seed), preset)
            for strategy in ("OSC", "PSC"):
                for N in range(1, 6):
                    theta = initialize(obs, preset, N, InitOptions(strategy=strategy),
                                       np.random.default_rng(seed))
                    values[strategy][N].append(log_likelihood(obs, theta, preset))
        for N in range(1, 6):
            psc, osc = np.array(values["PSC"][N]), np.array(values["OSC"][N])
            se = pooled_standard_error(psc, osc)
            margins.append((psc.mean() - osc.mean()) / se if se > 0 else np.inf)
            if psc.mean() < osc.mean() - se:
                failures.append((name, N))
    ACCEPTANCE_DETAILS["A4"] = (f"PSC >= OSC - 1 SE in {15 - len(failures)}/15 cases "
                                f"(smallest margin {min(margins):+.2f} SE)")
    assert not failures


@pytest.mark.acceptance("A5")
@pytest.mark.slow
def test_a5_gem_monotonicity(goodsep_fits, selections, variant_runs):
    traces = list(goodsep_fits[1]) + list(selections[1]) + list(variant_runs[1])
    traces += [random_fit(seed)[0].full_trace for seed in range(100)]
    worst = min(float(np.min(np.diff(t))) for t in traces if len(t) > 1)
    bad = sum(bool(np.any(np.diff(t) < -1e-9)) for t in traces)
    ACCEPTANCE_DETAILS["A5"] = (f"{len(traces)} traces, {bad} with a drop beyond 1e-9 "
                                f"(smallest step {worst:.3g})")
    assert bad == 0


@pytest.mark.acceptance("A6")
def test_a6_objective_equivalence():
    rng = np.random.default_rng(606)
    worst = 0.0
    for maps in map_pairs().values():
        for _ in range(100):
            stats, centre = scene_stats(rng, maps)
            s1, s2 = maps.bounds.uniform(rng, 2)
            if rng.uniform() < 0.5:
                s2 = centre
            d_direct = q_direct(s1, stats, maps) - q_direct(s2, stats, maps)
            d_simple = q_simplified(s1, stats, maps) - q_simplified(s2, stats, maps)
            worst = max(worst, abs(d_direct - d_simple) / max(1.0, abs(d_direct)))
    ACCEPTANCE_DETAILS["A6"] = f"worst scaled mismatch {worst:.2e} (tolerance 1e-8)"
    assert worst <= 1e-8


@pytest.mark.acceptance("A7")
def test_a7_gradient():
    rng = np.random.default_rng(707)
    worst_err, worst_ratio = 0.0, 0.0
    for maps in map_pairs().values():
        consts = maps.f.lipschitz(), maps.g.lipschitz()
        for _ in range(100):
            stats, _ = scene_stats(rng, maps)
            s = maps.bounds.uniform(rng, 1)[0]
            grad = grad_q(s, stats, maps)
            h = 1e-3
            num = np.array([(q_simplified(s + h * e, stats, maps)
                             - q_simplified(s - h * e, stats, maps)) / (2 * h)
                            for e in np.eye(maps.dim)])
            worst_err = max(worst_err, np.linalg.norm(num - grad) / np.linalg.norm(grad))
            pts = np.vstack([s, maps.bounds.uniform(rng, 100)])
            norms = np.linalg.norm(grad_q(pts, stats, maps), axis=1)
            worst_ratio = max(worst_ratio, norms.max() / grad_norm_bound(stats, *consts))
    ACCEPTANCE_DETAILS["A7"] = (f"worst relative FD error {worst_err:.2e} (< 1e-5), "
                                f"largest |grad|/bound {worst_ratio:.2e}")
    assert worst_err < 1e-5
    assert worst_ratio <= 1.0


def _pairs(rng, maps, count):
    """Half uniform pairs across the box, half close pairs."""
    a = maps.bounds.uniform(rng, count)
    b = maps.bounds.uniform(rng, count)
    near = rng.uniform(size=count) < 0.5
    width = maps.bounds.hi - maps.bounds.lo
    close = a + rng.standard_normal(a.shape) * width * 10 ** rng.uniform(-6, -1, (count, 1))
    b[near] = np.clip(close[near], maps.bounds.lo, maps.bounds.hi)
    return a, b


def _map_ratios(sensor, a, b, gap):
    const, dconst = sensor.lipschitz()
    dv = np.linalg.norm(sensor.eval(a) - sensor.eval(b), axis=1)
    dj = np.linalg.norm(sensor.jacobian(a) - sensor.jacobian(b), ord=2, axis=(1, 2))
    return (dv / gap).max() / const, (dj / gap).max() / dconst


@pytest.mark.acceptance("A8")
def test_a8_lipschitz_certificates():
    rng = np.random.default_rng(808)
    ratios = {"grad": 0.0, "phi": 0.0, "phi_lip": 0.0, "maps": 0.0}
    for maps in map_pairs().values():
        consts = maps.f.lipschitz(), maps.g.lipschitz()
        for _ in range(10):
            stats, _ = scene_stats(rng, maps)
            a, b = _pairs(rng, maps, 10_000)
            gap = np.linalg.norm(a - b, axis=1)
            keep = gap > 0
            a, b, gap = a[keep], b[keep], gap[keep]
            lip = lipschitz_L(stats, *consts)
            dg = np.linalg.norm(grad_q(a, stats, maps) - grad_q(b, stats, maps), axis=1)
            ratios["grad"] = max(ratios["grad"], (dg / gap).max() / lip)
            for sensor, mean, icov in ((maps.f, stats.mean_f, stats.icov_f),
                                       (maps.g, stats.mean_g, stats.icov_g)):
                va, vb = sensor.eval(a) - mean, sensor.eval(b) - mean
                ratios["phi"] = max(ratios["phi"], phi(va, icov).max() / phi_bound(icov))
                dv = np.linalg.norm(va - vb, axis=1)
                ok = dv > 0
                dphi = np.abs(phi(va, icov) - phi(vb, icov))[ok] / dv[ok]
                ratios["phi_lip"] = max(ratios["phi_lip"], dphi.max() / phi_lipschitz(icov))
                ratios["maps"] = max(ratios["maps"], *_map_ratios(sensor, a, b, gap))
    ACCEPTANCE_DETAILS["A8"] = ("largest sampled ratio to certificate: "
                                + ", ".join(f"{k} {v:.2e}" for k, v in ratios.items()))
    # the phi bound is attained, so allow rounding at the maximum
    assert ratios["phi"] <= 1.0 + 1e-12, ratios
    assert all(ratios[k] <= 1.0 for k in ("grad", "phi_lip", "maps")), ratios


@pytest.mark.acceptance("A9")
def test_a9_stereo_round_trip_and_eigenvalues():
    rng = np.random.default_rng(909)
    worst_trip, worst_eig = 0.0, 0.0
    for dim in (2, 3):
        s = rng.uniform(-1000, 1000, (100, dim))
        s[:, -1] = rng.uniform(100, 5000, 100)
        back = stereo_preimage(stereo_eval(s))
        trip = np.linalg.norm(back - s, axis=1) / np.linalg.norm(s, axis=1)
        worst_trip = max(worst_trip, trip.max())
        for point in s:
            z = point[-1]
            eig = np.sort(np.linalg.eigvals(stereo_jacobian(point)).real)
            want = np.sort([1 / z] * (dim - 1) + [-1 / z**2])
            worst_eig = max(worst_eig, np.max(np.abs(eig - want) / np.abs(want)))
    ACCEPTANCE_DETAILS["A9"] = (f"worst round trip {worst_trip:.1e}, "
                                f"worst eigenvalue error {worst_eig:.1e} (relative)")
    assert worst_trip < 1e-9
    assert worst_eig < 1e-9
