"""Experiment drivers shared by the command line and the test suite."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .em import FitReport, fit
from .initialize import InitOptions, initialize
from .mappings import MapPair
from .model import ObservationSet, log_likelihood
from .search import VARIANTS, SearchOptions


def iterations_to_threshold(traces: dict, fraction: float = 0.99) -> dict:
    """Iterations each trace needs to cover ``fraction`` of the best gain.

    All traces must start from the same initial log-likelihood ``L0`` (entry
    0).  The target is ``L0 + fraction * (best final - L0)``, with the best
    final value taken over all traces, so a variant that stalls early is
    not credited with reaching its own low plateau.  A trace that never
    reaches the target scores ``len(trace)``, one more than its last
    iteration index.
    """
    starts = {float(np.asarray(t)[0]) for t in traces.values()}
    if len(starts) != 1:
        raise ValueError("traces must share their starting value")
    start = starts.pop()
    best = max(float(np.asarray(t)[-1]) for t in traces.values())
    target = start + fraction * (best - start)
    out = {}
    for name, tr in traces.items():
        tr = np.asarray(tr)
        hit = np.flatnonzero(tr >= target)
        out[name] = int(hit[0]) if hit.size else len(tr)
    return out


def bench_variants(obs: ObservationSet, maps: MapPair, N: int, theta0, opts: SearchOptions,
                   seed: int = 0, variants=tuple(VARIANTS), threads: int = 1) -> dict:
    """Fit every variant from the same start with the same seed."""
    return {v: fit(obs, N, theta0, maps, replace(opts, variant=v), seed=seed, threads=threads)
            for v in variants}


def trace_table(reports: dict[str, FitReport], length: int | None = None):
    """Rows ``(iteration, L_variant1, L_variant2, ...)`` for iterations ``1..length``.

    ``length`` defaults to the longest run; a variant that stopped early
    keeps its last value.  Starting values are in ``FitReport.loglik_init``.
    """
    names = list(reports)
    traces = [reports[n].full_trace for n in names]
    length = length or max(len(t) - 1 for t in traces)
    padded = [np.concatenate([t, np.full(max(0, length + 1 - len(t)), t[-1])]) for t in traces]
    return names, [[q, *(p[q] for p in padded)] for q in range(1, length + 1)]


def compare_init(obs: ObservationSet, maps: MapPair, n_values, seeds,
                 base: InitOptions | None = None) -> list[dict]:
    """Initial log-likelihood statistics for OSC and PSC at each ``N``."""
    base = base or InitOptions()
    rows = []
    for strategy in ("OSC", "PSC"):
        opts = replace(base, strategy=strategy)
        for N in n_values:
            vals = np.array([log_likelihood(obs, initialize(obs, maps, N, opts,
                                                            np.random.default_rng(s)), maps)
                             for s in seeds])
            rows.append({"strategy": strategy, "N": int(N), "mean": float(vals.mean()),
                         "var": float(vals.var(ddof=1)) if len(vals) > 1 else 0.0,
                         "runs": len(vals), "values": vals.tolist()})
    return rows


def pooled_standard_error(a, b) -> float:
    """Standard error of ``mean(a) - mean(b)`` with a pooled variance."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    na, nb = len(a), len(b)
    pooled = ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2)
    return float(np.sqrt(pooled * (1.0 / na + 1.0 / nb)))
