"""Choosing the number of objects with a BIC-type score."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .em import FitReport, fit
from .initialize import InitOptions, initialize
from .mappings import MapPair
from .model import ObservationSet
from .search import SearchOptions


@dataclass(frozen=True)
class BicScore:
    """``score = -2 * loglik + dim * log(M + K)``."""

    n_components: int
    score: float
    loglik: float
    dim: int


def model_dimension(N: int, d: int, r: int, p: int) -> int:
    """Free parameters of an ``N``-object model: ``N (d + 2 + (r^2 + p^2 + r + p)/2)``."""
    if min(N, d, r, p) < 0:
        raise ValueError("dimensions must be nonnegative")
    return N * (d + 2 + (r * r + p * p + r + p) // 2)


def _score(N, loglik, obs, d) -> BicScore:
    dim = model_dimension(N, d, obs.f.shape[1], obs.g.shape[1])
    return BicScore(N, -2.0 * loglik + dim * np.log(obs.M + obs.K), loglik, dim)


def bic_score(report: FitReport, obs: ObservationSet) -> BicScore:
    """Score of a fitted model on the data it was fitted to."""
    params = report.params
    return _score(params.n_objects, report.loglik, obs, params.positions.shape[1])


def _seed_for(rng: np.random.Generator, count: int) -> list[int]:
    return [int(x) for x in rng.integers(0, 2**31 - 1, size=count)]


def select_n(obs: ObservationSet, maps: MapPair, n_max: int, opts: SearchOptions | None = None,
             rng: np.random.Generator | None = None, init_opts: InitOptions | None = None,
             threads: int = 1, on_fit=None):
    """Fit ``N = 1..n_max`` from fresh initializations and keep the best score.

    A model that cannot be fitted gets an infinite score instead of
    aborting the sweep.  ``on_fit(N, report)``, when given, is called with
    every finished fit (possibly from worker threads).

    Returns
    -------
    best_n : int
    scores : list of BicScore
        One entry per ``N``, in increasing order.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    opts = opts or SearchOptions()
    init_opts = init_opts or InitOptions(strategy="PSC")
    rng = rng if rng is not None else np.random.default_rng()
    seeds = _seed_for(rng, n_max)

    def run(N):
        seed = seeds[N - 1]
        try:
            theta0 = initialize(obs, maps, N, init_opts, np.random.default_rng(seed))
            report = fit(obs, N, theta0, maps, opts, seed=seed)
            if on_fit is not None:
                on_fit(N, report)
            return bic_score(report, obs)
        except (ValueError, np.linalg.LinAlgError):
            return BicScore(N, np.inf, -np.inf, model_dimension(N, maps.dim, obs.f.shape[1],
                                                                  obs.g.shape[1]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(run, range(1, n_max + 1)))
    else:
        scores = [run(N) for N in range(1, n_max + 1)]
    best = min(scores, key=lambda b: b.score)
    return best.n_components, scores
