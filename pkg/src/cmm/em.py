"""Generalized EM for conjugate mixtures.

One iteration runs the E-step, the closed-form prior update and then, for
every object independently, Choose followed by Local Search and the
covariance update.  The per-object updates are only required to increase
the expected complete-data log-likelihood, so the observed log-likelihood
never decreases.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .mappings import MapPair
from .model import (Assignment, ModelParams, ObservationSet, ZeroDensityError,
                    joint_log_terms, log_likelihood)
from .objective import ObjectStats, profiled_covariances, q_full, q_simplified, stats_from_weights
from .search import SearchOptions, choose, local_search

EMPTY_MASS = 1e-8
CONVERGENCE_RUN = 3


@dataclass
class Posteriors:
    """Responsibilities; the last column belongs to the outlier component."""

    alpha: np.ndarray
    beta: np.ndarray

    def check(self, tol: float = 1e-12) -> None:
        for name, mat in (("alpha", self.alpha), ("beta", self.beta)):
            if np.any(mat < 0) or np.any(mat > 1 + tol):
                raise AssertionError(f"{name} entries outside [0, 1]")
            if np.max(np.abs(mat.sum(axis=1) - 1.0), initial=0.0) > tol:
                raise AssertionError(f"{name} rows do not sum to 1")

    def hard_assignment(self) -> Assignment:
        return Assignment(np.argmax(self.alpha, axis=1) + 1, np.argmax(self.beta, axis=1) + 1)


def _normalize(terms: np.ndarray) -> np.ndarray:
    norm = logsumexp(terms, axis=1, keepdims=True)
    if not np.all(np.isfinite(norm)):
        raise ZeroDensityError("zero-density observation")
    post = np.exp(terms - norm)
    # renormalize away the last ulp so rows sum to one
    return post / post.sum(axis=1, keepdims=True)


def e_step(obs: ObservationSet, params: ModelParams, maps: MapPair) -> Posteriors:
    """Bayes-rule responsibilities computed in the log domain."""
    tf, tg = joint_log_terms(obs, params, maps)
    return Posteriors(_normalize(tf), _normalize(tg))


def update_priors(post: Posteriors):
    """Column means of the responsibilities: ``(priors_f, priors_g)``."""
    pf = post.alpha.mean(axis=0)
    pg = post.beta.mean(axis=0)
    return pf / pf.sum(), pg / pg.sum()


def object_stats(post: Posteriors, obs: ObservationSet, n: int,
                 regularization: float = 1e-9) -> ObjectStats:
    """Weighted means and scatter matrices of object ``n`` (0-based)."""
    return stats_from_weights(post.alpha[:, n], post.beta[:, n], obs.f, obs.g, regularization)


def update_covariances(s_new, stats: ObjectStats, maps: MapPair, prev=None):
    """``Sigma = C_f + v_f v_f^T`` and ``Gamma = C_g + v_g v_g^T`` at ``s_new``.

    A modality without any responsibility keeps its previous covariance
    (``prev = (Sigma_old, Gamma_old)``) when one is supplied.
    """
    cov_f, cov_g = profiled_covariances(s_new, stats, maps)
    if prev is not None:
        if stats.empty_f:
            cov_f = np.array(prev[0], dtype=float)
        if stats.empty_g:
            cov_g = np.array(prev[1], dtype=float)
    return cov_f, cov_g


@dataclass
class FitReport:
    """Outcome of :func:`fit`.

    ``loglik_trace[q]`` is the log-likelihood after iteration ``q + 1`` and
    ``trajectory[q]`` the positions it produced; the starting values are
    kept in ``loglik_init`` and ``trajectory_init``.
    """

    params: ModelParams
    loglik_init: float
    loglik_trace: np.ndarray
    trajectory: np.ndarray
    trajectory_init: np.ndarray
    assignment: Assignment
    iterations_run: int
    converged: bool
    flags: dict = field(default_factory=dict)

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1]) if len(self.loglik_trace) else self.loglik_init

    @property
    def full_trace(self) -> np.ndarray:
        return np.concatenate([[self.loglik_init], self.loglik_trace])


@dataclass
class _ObjectUpdate:
    position: np.ndarray
    cov_f: np.ndarray
    cov_g: np.ndarray
    fell_back: bool
    empty: bool


def _update_object(n: int, post: Posteriors, obs: ObservationSet, params: ModelParams,
                   maps: MapPair, opts: SearchOptions, rng: np.random.Generator) -> _ObjectUpdate:
    prev_s = params.positions[n]
    prev_cov = (params.cov_f[n], params.cov_g[n])
    stats = object_stats(post, obs, n, opts.regularization)
    if stats.mass_f + stats.mass_g < EMPTY_MASS * (obs.M + obs.K):
        return _ObjectUpdate(prev_s.copy(), *prev_cov, False, True)

    chosen, fell_back = choose(opts.strategy, prev_s, stats, maps, rng, opts)
    if q_simplified(chosen, stats, maps) < q_simplified(prev_s, stats, maps):
        chosen = prev_s
    s_new = local_search(chosen, stats, maps, opts)

    # keep whichever candidate scores best on the exact objective; the last
    # one is the current parameter set, so the objective cannot go down
    candidates = [(s_new, *update_covariances(s_new, stats, maps, prev_cov)),
                  (prev_s, *update_covariances(prev_s, stats, maps, prev_cov)),
                  (prev_s, *prev_cov)]
    scores = [q_full(s, cf, cg, stats, maps) for s, cf, cg in candidates]
    best = int(np.argmax(scores))
    s, cf, cg = candidates[best]
    return _ObjectUpdate(np.array(s, dtype=float), cf, cg, fell_back, False)


def _object_rng(seed: int, iteration: int, n: int) -> np.random.Generator:
    return np.random.default_rng([seed, iteration, n])


def _m_step(post, obs, params, maps, opts, seed, iteration, pool):
    def task(n):
        return _update_object(n, post, obs, params, maps, opts, _object_rng(seed, iteration, n))

    indices = range(params.n_objects)
    if pool is None:
        return [task(n) for n in indices]
    return list(pool.map(task, indices))


def _check_params(params: ModelParams) -> None:
    params.validate(tol=1e-9)


def _rescue(n, obs, params, maps, current_ll, candidates, used):
    """Move empty object ``n`` onto an unused candidate mode.

    Half of the outlier prior is handed to the respawned component.  The
    move is kept only if the log-likelihood does not drop.
    """
    for idx, cand in enumerate(candidates):
        if idx in used:
            continue
        used.add(idx)
        trial = params.copy()
        trial.positions[n] = cand.position
        trial.cov_f[n] = cand.cov_f
        trial.cov_g[n] = cand.cov_g
        for pri in (trial.priors_f, trial.priors_g):
            give = 0.5 * pri[-1]
            pri[n] += give
            pri[-1] -= give
        try:
            ll = log_likelihood(obs, trial, maps)
        except ZeroDensityError:
            continue
        if ll >= current_ll:
            return ModelParams(trial.priors_f, trial.priors_g, trial.positions,
                               trial.cov_f, trial.cov_g), ll
        return None
    return None


def fit(obs: ObservationSet, N: int, theta0: ModelParams, maps: MapPair,
        opts: SearchOptions | None = None, seed: int = 0, threads: int = 1,
        respawn=None) -> FitReport:
    """Run generalized EM from ``theta0``.

    Parameters
    ----------
    obs : ObservationSet
    N : int
        Number of objects; must match ``theta0``.
    theta0 : ModelParams
    maps : MapPair
    opts : SearchOptions, optional
    seed : int
        Root of the per-object random streams ``(seed, iteration, n)``.
    threads : int
        Worker threads for the per-object M-step tasks.
    respawn : callable, optional
        ``respawn(obs, maps, params)`` returning candidate components (objects
        with ``position``, ``cov_f``, ``cov_g``) for empty objects.  Defaults
        to parameter-space candidates from :mod:`cmm.initialize`.

    Returns
    -------
    FitReport
    """
    opts = opts or SearchOptions()
    if theta0.n_objects != N:
        raise ValueError(f"theta0 describes {theta0.n_objects} objects, expected {N}")
    theta0.validate(tol=1e-9)
    params = theta0.copy()
    ll = log_likelihood(obs, params, maps)
    ll_init = ll
    trace, traj = [], []
    flags = {"choose_fallbacks": 0, "empty_events": 0, "rescues": 0, "rejected_rescues": 0}
    respawn_pool, used = None, set()
    converged, quiet = False, 0
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 and N > 1 else None
    try:
        for it in range(opts.max_em_iters):
            post = e_step(obs, params, maps)
            post.check()
            priors_f, priors_g = update_priors(post)
            updates = _m_step(post, obs, params, maps, opts, seed, it, pool)
            params = ModelParams(
                priors_f, priors_g,
                np.array([u.position for u in updates]).reshape(N, maps.dim),
                np.array([u.cov_f for u in updates]).reshape(N, *params.cov_f.shape[1:]),
                np.array([u.cov_g for u in updates]).reshape(N, *params.cov_g.shape[1:]))
            _check_params(params)
            ll_prev, ll = ll, log_likelihood(obs, params, maps)
            flags["choose_fallbacks"] += sum(u.fell_back for u in updates)

            for n, upd in enumerate(updates):
                if not upd.empty:
                    continue
                flags["empty_events"] += 1
                if respawn_pool is None:
                    respawn_pool = (respawn or _default_respawn)(obs, maps, params)
                rescued = _rescue(n, obs, params, maps, ll, respawn_pool, used)
                if rescued is None:
                    flags["rejected_rescues"] += 1
                else:
                    params, ll = rescued
                    flags["rescues"] += 1

            trace.append(ll)
            traj.append(params.positions.copy())
            if opts.likelihood_tol > 0:
                gain = (ll - ll_prev) / max(abs(ll_prev), 1e-300)
                quiet = quiet + 1 if gain < opts.likelihood_tol else 0
                if quiet >= CONVERGENCE_RUN:
                    converged = True
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    if opts.likelihood_tol <= 0:
        # fixed-iteration mode: running the full budget is the requested outcome
        converged = True
    final_post = e_step(obs, params, maps)
    return FitReport(
        params=params,
        loglik_init=ll_init,
        loglik_trace=np.asarray(trace, dtype=float),
        trajectory=np.asarray(traj, dtype=float).reshape(len(traj), N, maps.dim),
        trajectory_init=theta0.positions.copy(),
        assignment=final_post.hard_assignment(),
        iterations_run=len(trace),
        converged=converged,
        flags=flags,
    )


def _default_respawn(obs, maps, params):
    from .initialize import InitOptions, respawn_candidates
    return respawn_candidates(obs, maps, params, InitOptions(), np.random.default_rng(0))
