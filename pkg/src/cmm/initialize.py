"""Initialization of the conjugate mixture: OSC and PSC candidate strategies.

Both strategies produce candidate object positions in the latent space S,
score them by k-NN density of their images among the observations, and
pick ``N`` well separated centres.

* OSC looks for modes in each observation space separately and carries
  them to S (preimage in F, best level-set point in G).
* PSC first carries every observation to S and looks for modes there.

All distance computations use coordinates divided by per-dimension
bandwidths, so the two sensor spaces and S are on a comparable footing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .mappings import DomainError, MapPair
from .model import ModelParams, ObservationSet

MIN_SCORE_FRACTION = 0.1


@dataclass
class InitOptions:
    """Settings of the initialization.

    Bandwidths are scalars or per-dimension sequences; None selects the
    rule of thumb ``1.06 * std * n**(-1/5)`` per dimension.  ``rarefy_eps``
    is expressed in bandwidth units and applies to every space.
    """

    strategy: str = "PSC"
    bandwidth_f: float | list | None = None
    bandwidth_g: float | list | None = None
    bandwidth_s: float | list | None = None
    knn_k: int = 5
    rarefy_eps: float = 1.0
    restarts: int = 40
    level_samples: int = 50

    def __post_init__(self):
        if self.strategy not in ("OSC", "PSC"):
            raise ValueError(f"unknown init strategy {self.strategy!r}")
        for name in ("bandwidth_f", "bandwidth_g", "bandwidth_s"):
            val = getattr(self, name)
            if val is not None and np.any(np.asarray(val, dtype=float) <= 0):
                raise ValueError(f"{name} must be positive")
        if self.knn_k < 1:
            raise ValueError("knn_k must be at least 1")
        if not self.rarefy_eps > 0:
            raise ValueError("rarefy_eps must be positive")
        if self.restarts < 1 or self.level_samples < 1:
            raise ValueError("restarts and level_samples must be at least 1")


def rule_of_thumb_bandwidth(points) -> np.ndarray:
    """Per-dimension ``1.06 * sigma * n**(-1/5)``; degenerate axes get 1."""
    pts = _as_rows(points)
    if len(pts) < 2:
        return np.ones(pts.shape[1])
    h = 1.06 * pts.std(axis=0, ddof=1) * len(pts) ** -0.2
    return np.where(h > 0, h, 1.0)


def _as_rows(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def _bandwidth(value, points) -> np.ndarray:
    pts = _as_rows(points)
    if value is None:
        return rule_of_thumb_bandwidth(pts)
    return np.broadcast_to(np.asarray(value, dtype=float), (pts.shape[1],)).copy()


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def _shift_many(pts, starts, max_iter, tol, weights=None):
    x = starts.copy()
    logw = 0.0 if weights is None else np.log(weights)
    active = np.ones(len(x), dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        xa = x[active]
        d2 = np.sum((pts[None, :, :] - xa[:, None, :]) ** 2, axis=-1)
        e = logw - 0.5 * d2
        w = np.exp(e - e.max(axis=1, keepdims=True))
        new = w @ pts / w.sum(axis=1, keepdims=True)
        moved = np.linalg.norm(new - xa, axis=1)
        x[active] = new
        idx = np.flatnonzero(active)
        active[idx[moved < tol]] = False
    return x


def mean_shift(points, start, bandwidth, tol: float = 1e-6, max_iter: int = 500,
               weights=None) -> np.ndarray:
    """Gaussian-kernel mean shift from ``start``.

    Stops when a step moves less than ``tol`` bandwidths or after
    ``max_iter`` steps.  ``bandwidth`` may be a scalar or per-dimension;
    optional positive ``weights`` give a weighted kernel density.
    """
    pts = _as_rows(points)
    if len(pts) == 0:
        raise ValueError("mean shift needs at least one point")
    start = np.atleast_1d(np.asarray(start, dtype=float))
    h = np.broadcast_to(np.asarray(bandwidth, dtype=float), start.shape)
    out = _shift_many(pts / h, (start / h)[None, :], max_iter, tol, _weights(weights, pts))
    return out[0] * h


def mean_shift_modes(points, starts, bandwidth, tol: float = 1e-6,
                     max_iter: int = 500, weights=None) -> np.ndarray:
    """:func:`mean_shift` from several starts at once; one mode per start."""
    pts = _as_rows(points)
    starts = _as_rows(starts)
    h = np.broadcast_to(np.asarray(bandwidth, dtype=float), (pts.shape[1],))
    return _shift_many(pts / h, starts / h, max_iter, tol, _weights(weights, pts)) * h


def _weights(weights, pts):
    if weights is None:
        return None
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(pts),) or np.any(weights <= 0):
        raise ValueError("weights must be positive, one per point")
    return weights / weights.max()


def _metric_shift(pts, metrics, starts, max_iter=500, tol=1e-6):
    """Mean shift with a separate quadratic-form kernel per data point.

    Each point ``i`` contributes ``exp(-(x - p_i)^T A_i (x - p_i) / 2)``;
    the fixed-point update is ``x <- (sum w_i A_i)^-1 sum w_i A_i p_i``.
    Convergence is measured in the norm of the mean metric.
    """
    mp = np.einsum("pij,pj->pi", metrics, pts)
    scale = np.sqrt(np.mean(np.diagonal(metrics, axis1=1, axis2=2), axis=0))
    out = np.empty_like(starts)
    for r, x in enumerate(starts):
        for _ in range(max_iter):
            diff = x - pts
            e = -0.5 * np.einsum("pi,pij,pj->p", diff, metrics, diff)
            w = np.exp(e - e.max())
            new = np.linalg.solve(np.einsum("p,pij->ij", w, metrics), w @ mp)
            moved = np.linalg.norm((new - x) * scale)
            x = new
            if moved < tol:
                break
        out[r] = x
    return out


def knn_distance(points, x, k: int) -> float:
    """Distance from ``x`` to its ``k``-th nearest point (a point at ``x`` counts)."""
    pts = _as_rows(points)
    if k > len(pts):
        raise ValueError("k exceeds the number of points")
    if k < 1:
        raise ValueError("k must be at least 1")
    dist = np.linalg.norm(pts - np.atleast_1d(x), axis=1)
    return float(np.partition(dist, k - 1)[k - 1])


def knn_distances(points, queries, k: int) -> np.ndarray:
    """Vectorized :func:`knn_distance` for many query points."""
    pts = _as_rows(points)
    if k > len(pts):
        raise ValueError("k exceeds the number of points")
    queries = _as_rows(queries)
    dist, _ = cKDTree(pts).query(queries, k=[k])
    return dist[:, 0]


def rarefy(candidates, eps: float) -> np.ndarray:
    """Greedy thinning: keep a candidate only if it is farther than ``eps``
    from every candidate kept before it."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    cands = _as_rows(candidates)
    kept: list[int] = []
    for i, c in enumerate(cands):
        if not kept or np.min(np.linalg.norm(cands[kept] - c, axis=1)) > eps:
            kept.append(i)
    return cands[kept]


# ---------------------------------------------------------------------------
# candidate generation
# ---------------------------------------------------------------------------

class _Scales(NamedTuple):
    f: np.ndarray
    g: np.ndarray
    s: np.ndarray


def _f_preimages(obs: ObservationSet, maps: MapPair) -> np.ndarray:
    if not maps.f.injective:
        raise DomainError("preimage unavailable")
    try:
        return np.asarray(maps.f.preimage(obs.f), dtype=float)
    except DomainError:
        pass
    out = []
    for row in obs.f:
        try:
            out.append(maps.f.preimage(row))
        except DomainError:
            continue
    return np.asarray(out, dtype=float).reshape(-1, maps.dim)


def _scales(obs, maps, opts, s_points) -> _Scales:
    return _Scales(_bandwidth(opts.bandwidth_f, obs.f), _bandwidth(opts.bandwidth_g, obs.g),
                   _bandwidth(opts.bandwidth_s, s_points))


def _f_knn(s, obs, maps, scales, k):
    """Scaled k-NN distance of ``F(s)`` among the F observations (inf off-domain)."""
    s = _as_rows(s)
    out = np.full(len(s), np.inf)
    ok = maps.contains(s)
    if ok.any():
        out[ok] = knn_distances(obs.f / scales.f, maps.f.eval(s[ok]) / scales.f, k)
    return out


def _g_knn(s, obs, maps, scales, k):
    s = _as_rows(s)
    out = np.full(len(s), np.inf)
    ok = maps.contains(s)
    if ok.any():
        out[ok] = knn_distances(obs.g / scales.g, maps.g.eval(s[ok]) / scales.g, k)
    return out


def _best_on_level_sets(values, obs, maps, scales, opts, rng) -> np.ndarray:
    """For each G value, the level-set draw whose F image is densest."""
    k = min(opts.knn_k, obs.M)
    draws = maps.g.level_set_batch(_as_rows(values), opts.level_samples, maps.bounds, rng)
    flat = draws.reshape(-1, maps.dim)
    valid = ~np.isnan(flat).any(axis=1)
    score = np.full(len(flat), np.inf)
    if valid.any():
        score[valid] = _f_knn(flat[valid], obs, maps, scales, k)
    score = score.reshape(draws.shape[:2])
    best = np.argmin(score, axis=1)
    found = np.isfinite(score[np.arange(len(score)), best])
    return draws[np.arange(len(draws)), best][found]


def candidate_scores(cands, obs, maps, scales, k) -> np.ndarray:
    """Sum over both spaces of the inverse k-NN distance, each normalized by
    its maximum over the candidates."""
    cands = _as_rows(cands)
    if len(cands) == 0:
        return np.zeros(0)
    total = np.zeros(len(cands))
    for dist in (_f_knn(cands, obs, maps, scales, min(k, obs.M)),
                 _g_knn(cands, obs, maps, scales, min(k, obs.K))):
        inv = 1.0 / np.maximum(dist, 1e-12)
        top = inv.max()
        if top > 0:
            total += inv / top
    return total


def _random_starts(points, count, rng):
    idx = rng.choice(len(points), size=min(count, len(points)), replace=False)
    return points[idx]


def _transported_metrics(pre_f, pre_g, maps, scales):
    """Kernel metrics in S induced by the observation-space bandwidths.

    A preimage of an F observation gets ``J_F^T H_f^-2 J_F``.  A level-set
    point from a G observation gets ``J_G^T H_g^-2 J_G`` across the level set
    and the F metric, projected onto the level set, along it.
    """
    def f_metric(s):
        jac = maps.f.jacobian(s) / scales.f[:, None]
        return np.einsum("pri,prj->pij", jac, jac)

    met_f = f_metric(pre_f)
    jg = maps.g.jacobian(pre_g) / scales.g[:, None]
    across = np.einsum("pri,prj->pij", jg, jg)
    q, _ = np.linalg.qr(np.swapaxes(jg, 1, 2), mode="complete")
    tangent = q[:, :, jg.shape[1]:]
    proj = np.einsum("pik,pjk->pij", tangent, tangent)
    met_g = across + proj @ f_metric(pre_g) @ proj
    return np.concatenate([met_f, met_g])


def psc_candidates(obs: ObservationSet, maps: MapPair, opts: InitOptions,
                   rng: np.random.Generator, restarts: int | None = None):
    """Parameter-space modes and their density scores.

    Every observation is carried to S, and mean shift runs on the pooled
    points.  Each point's kernel is its observation-space kernel carried
    through the map, so the mode search follows sensor precision rather
    than the distortion of the map.  Returns ``(candidates, scores,
    scales)`` with candidates sorted by decreasing score.
    """
    pre_f = _f_preimages(obs, maps)
    pre_f = pre_f[maps.contains(pre_f) & maps.bounds.contains(pre_f)]
    provisional = _Scales(_bandwidth(opts.bandwidth_f, obs.f), _bandwidth(opts.bandwidth_g, obs.g),
                          np.ones(maps.dim))
    pre_g = _best_on_level_sets(obs.g, obs, maps, provisional, opts, rng)
    pre_g = pre_g[maps.contains(pre_g) & maps.bounds.contains(pre_g)]
    pooled = np.concatenate([pre_f, pre_g])
    if len(pooled) == 0:
        raise DomainError("no observation maps into the latent domain")
    scales = _scales(obs, maps, opts, pooled)
    if opts.bandwidth_s is None:
        metrics = _transported_metrics(pre_f, pre_g, maps, scales)
        starts = _random_starts(pooled, restarts or opts.restarts, rng)
        modes = _metric_shift(pooled, metrics, starts)
    else:
        starts = _random_starts(pooled, restarts or opts.restarts, rng)
        modes = mean_shift_modes(pooled, starts, scales.s)
    return _finish_candidates(modes, obs, maps, opts, scales, pooled)


def osc_candidates(obs: ObservationSet, maps: MapPair, opts: InitOptions,
                   rng: np.random.Generator):
    """Observation-space modes carried to the latent space, with scores."""
    pre_f = _f_preimages(obs, maps)
    pre_f = pre_f[maps.contains(pre_f) & maps.bounds.contains(pre_f)]
    scales = _scales(obs, maps, opts, pre_f)
    modes_f = mean_shift_modes(obs.f, _random_starts(obs.f, opts.restarts, rng), scales.f)
    modes_f = rarefy(modes_f / scales.f, opts.rarefy_eps) * scales.f
    modes_g = mean_shift_modes(obs.g, _random_starts(obs.g, opts.restarts, rng), scales.g)
    modes_g = rarefy(modes_g / scales.g, opts.rarefy_eps) * scales.g

    cands = []
    for mode in modes_f:
        try:
            cands.append(np.asarray(maps.f.preimage(mode), dtype=float))
        except DomainError:
            continue
    k = min(opts.knn_k, obs.M)
    for mode in modes_g:
        try:
            pts = maps.g.level_set_sample(mode, opts.level_samples, maps.bounds, rng)
        except DomainError:
            continue
        pts = pts[maps.contains(pts)]
        if len(pts):
            cands.append(pts[np.argmin(_f_knn(pts, obs, maps, scales, k))])
    cands = np.asarray(cands, dtype=float).reshape(-1, maps.dim)
    cands = cands[maps.contains(cands)] if len(cands) else cands
    return _finish_candidates(cands, obs, maps, opts, scales, pre_f)


class Candidates(NamedTuple):
    """Rarefied latent candidates sorted by decreasing density score, plus
    the observations carried to S (used to pad short candidate lists)."""

    points: np.ndarray
    scores: np.ndarray
    scales: _Scales
    mapped: np.ndarray


def _finish_candidates(cands, obs, maps, opts, scales, mapped):
    if len(cands) == 0:
        return Candidates(cands, np.zeros(0), scales, mapped)
    cands = rarefy(cands / scales.s, opts.rarefy_eps) * scales.s
    scores = candidate_scores(cands, obs, maps, scales, opts.knn_k)
    order = np.argsort(-scores, kind="stable")
    return Candidates(cands[order], scores[order], scales, mapped)


# ---------------------------------------------------------------------------
# centres, covariances, parameters
# ---------------------------------------------------------------------------

def _farthest_fill(chosen, pool, points, count):
    pool = list(pool)
    while len(chosen) < count and pool:
        dist = np.array([np.min(np.linalg.norm(points[chosen] - points[i], axis=1))
                         for i in pool])
        chosen.append(pool.pop(int(np.argmax(dist))))
    return chosen


def observation_embedding(cands, maps: MapPair, scales) -> np.ndarray:
    """Candidates as ``[F(s)/h_f, G(s)/h_g]``: where sensors can tell them apart."""
    cands = _as_rows(cands)
    return np.concatenate([maps.f.eval(cands) / scales.f, maps.g.eval(cands) / scales.g], axis=1)


def select_centres(cands, scores, N: int, embedding, maps: MapPair, rng: np.random.Generator,
                   fill=None):
    """Pick ``N`` centres: the densest candidate, then farthest-point greedy.

    Distances are measured between rows of ``embedding`` (one per
    candidate).  Candidates scoring below a tenth of the best are only used
    when the stronger ones run out.  Any remaining centres are drawn at
    random from ``fill`` (observations carried to S), then uniformly over
    the search box.  Returns ``(centres, padded)``.
    """
    cands = _as_rows(cands) if len(cands) else np.zeros((0, maps.dim))
    chosen: list[int] = []
    if len(cands):
        points = _as_rows(embedding)
        order = np.argsort(-np.asarray(scores), kind="stable")
        strong = [i for i in order if scores[i] >= MIN_SCORE_FRACTION * scores[order[0]]]
        weak = [i for i in order if i not in strong]
        chosen = [strong[0]]
        chosen = _farthest_fill(chosen, strong[1:], points, N)
        chosen = _farthest_fill(chosen, weak, points, N)
    centres = [cands[i] for i in chosen[:N]]
    padded = N - len(centres)
    if padded and fill is not None and len(fill):
        pick = rng.choice(len(fill), size=min(padded, len(fill)), replace=False)
        centres.extend(_as_rows(fill)[pick])
    tries = 0
    while len(centres) < N:
        pts = maps.bounds.uniform(rng, 64)
        pts = pts[maps.contains(pts)]
        centres.extend(pts[: N - len(centres)])
        tries += 1
        if tries > 1000:
            raise DomainError("search box does not meet the map domains")
    return np.asarray(centres, dtype=float).reshape(N, maps.dim), padded


def _robust_scatter(data, centre, floor_scale):
    """Scatter about ``centre`` of the points within 3 MADs of their median."""
    dim = data.shape[1]
    if len(data) >= 2:
        med = np.median(data, axis=0)
        mad = 1.4826 * np.median(np.abs(data - med), axis=0)
        keep = np.all(np.abs(data - med) <= 3.0 * np.where(mad > 0, mad, np.inf), axis=1)
        data = data[keep]
    if len(data) < dim + 1:
        cov = np.diag(floor_scale**2)
    else:
        resid = data - centre
        cov = resid.T @ resid / len(resid)
    delta = 1e-9 * np.trace(cov) / dim
    if not delta > 0:
        delta = 1e-12
    return cov + delta * np.eye(dim)


def initial_covariances(centres, obs: ObservationSet, maps: MapPair, scales):
    """Empirical covariances of the observations nearest to each centre's
    image, taken about that image (the component mean)."""
    centres = _as_rows(centres)
    out = []
    for data, mp, h in ((obs.f, maps.f, scales.f), (obs.g, maps.g, scales.g)):
        images = mp.eval(centres)
        dist = np.linalg.norm((data[:, None, :] - images[None, :, :]) / h, axis=-1)
        nearest = np.argmin(dist, axis=1)
        dim = data.shape[1]
        out.append(np.array([_robust_scatter(data[nearest == n], images[n], h)
                             for n in range(len(centres))]).reshape(len(centres), dim, dim))
    return out[0], out[1]


def _params_from_centres(centres, obs, maps, scales) -> ModelParams:
    N = len(centres)
    cov_f, cov_g = initial_covariances(centres, obs, maps, scales)
    priors = np.full(N + 1, 1.0 / (N + 1))
    return ModelParams(priors, priors.copy(), centres, cov_f, cov_g)


def _init_from(found: Candidates, obs, maps, N, rng, info):
    if N < 1:
        raise ValueError("N must be at least 1")
    cands, scores, scales, mapped = found
    embedding = observation_embedding(cands, maps, scales) if len(cands) else cands
    centres, padded = select_centres(cands, scores, N, embedding, maps, rng, fill=mapped)
    if info is not None:
        info["padded"] = padded
        info["n_candidates"] = len(cands)
    return _params_from_centres(centres, obs, maps, scales)


def psc_init(obs: ObservationSet, maps: MapPair, N: int, opts: InitOptions | None = None,
             rng: np.random.Generator | None = None, info: dict | None = None) -> ModelParams:
    """Parameter Space Candidates initialization.

    ``info``, when given, receives the number of candidates found and the
    number of centres that had to be padded beyond the candidate list.
    """
    opts = opts or InitOptions(strategy="PSC")
    rng = rng if rng is not None else np.random.default_rng()
    return _init_from(psc_candidates(obs, maps, opts, rng), obs, maps, N, rng, info)


def osc_init(obs: ObservationSet, maps: MapPair, N: int, opts: InitOptions | None = None,
             rng: np.random.Generator | None = None, info: dict | None = None) -> ModelParams:
    """Observation Space Candidates initialization."""
    opts = opts or InitOptions(strategy="OSC")
    rng = rng if rng is not None else np.random.default_rng()
    return _init_from(osc_candidates(obs, maps, opts, rng), obs, maps, N, rng, info)


def initialize(obs: ObservationSet, maps: MapPair, N: int, opts: InitOptions | None = None,
               rng: np.random.Generator | None = None, info: dict | None = None) -> ModelParams:
    """Dispatch on ``opts.strategy``; ``N = 0`` gives the outlier-only model."""
    opts = opts or InitOptions()
    if N == 0:
        return ModelParams.outliers_only(maps.dim, obs.f.shape[1], obs.g.shape[1])
    init = psc_init if opts.strategy == "PSC" else osc_init
    return init(obs, maps, N, opts, rng, info)


class Candidate(NamedTuple):
    position: np.ndarray
    cov_f: np.ndarray
    cov_g: np.ndarray
    score: float


def respawn_candidates(obs: ObservationSet, maps: MapPair, params: ModelParams,
                       opts: InitOptions, rng: np.random.Generator) -> list[Candidate]:
    """Parameter-space modes ordered for re-seeding an empty component.

    Sufficiently dense modes come first, farthest from the current centres
    first; covariances are computed as if the mode joined the current
    centres.
    """
    cands, scores, scales, _ = psc_candidates(obs, maps, opts, rng,
                                              restarts=max(opts.restarts, 3 * params.n_objects))
    if len(cands) == 0:
        return []
    gap = np.array([np.min(np.linalg.norm((params.positions - c) / scales.s, axis=1),
                           initial=np.inf) for c in cands])
    strong = scores >= MIN_SCORE_FRACTION * scores.max()
    order = np.lexsort((-gap, ~strong))
    out = []
    for i in order:
        centres = np.vstack([params.positions, cands[i]])
        cov_f, cov_g = initial_covariances(centres, obs, maps, scales)
        out.append(Candidate(cands[i], cov_f[-1], cov_g[-1], float(scores[i])))
    return out
