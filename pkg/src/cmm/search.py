"""M-step search for one object: Choose a starting point, then Local Search.

Five algorithm variants combine a Choose strategy with a step-size rule:

======  ==============================  =========================
IPBA    previous estimate               global Lipschitz step
IGAA    uniform random search in S      local (accelerated) step
IVAA    preimage of the F-space mean    local (accelerated) step
IPAA    previous estimate               local (accelerated) step
IAAA    sampling the G-space level set  local (accelerated) step
======  ==============================  =========================
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mappings import DomainError, MapPair
from .objective import ObjectStats, grad_q, lipschitz_L, q_simplified, step_radius

VARIANTS = {
    "IPBA": ("IP", False),
    "IGAA": ("IG", True),
    "IVAA": ("IV", True),
    "IPAA": ("IP", True),
    "IAAA": ("IA", True),
}


@dataclass
class SearchOptions:
    """Settings of the GEM loop and of its M-step search.

    ``likelihood_tol <= 0`` switches off early stopping so that exactly
    ``max_em_iters`` iterations are run.
    """

    variant: str = "IAAA"
    max_em_iters: int = 70
    mstep_iters: int = 10
    manifold_samples: int = 50
    global_samples: int = 200
    likelihood_tol: float = 1e-7
    regularization: float = 1e-9

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        for name in ("max_em_iters", "mstep_iters", "manifold_samples", "global_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")

    @property
    def strategy(self) -> str:
        return VARIANTS[self.variant][0]

    @property
    def accelerated(self) -> bool:
        return VARIANTS[self.variant][1]


def _global_constants(maps: MapPair):
    return maps.f.lipschitz(), maps.g.lipschitz()


def local_step_constant(s, stats: ObjectStats, maps: MapPair, max_rounds: int = 30):
    """Lipschitz constant of ``grad Q`` valid on the ball a ``2/L`` step can reach.

    Starts from the radius implied by the constants at ``s`` itself and grows
    it until the radius computed from the shrunken domain fits inside the ball
    the constants were computed for.  Returns None when no such ball exists.
    """
    const_f = maps.f.local_lipschitz(s, 0.0)
    const_g = maps.g.local_lipschitz(s, 0.0)
    if const_f is None or const_g is None:
        return None
    rho = step_radius(stats, const_f, const_g)
    for _ in range(max_rounds):
        const_f = maps.f.local_lipschitz(s, rho)
        const_g = maps.g.local_lipschitz(s, rho)
        if const_f is None or const_g is None:
            return None
        needed = step_radius(stats, const_f, const_g)
        if needed <= rho:
            return lipschitz_L(stats, const_f, const_g)
        rho = max(needed, 1.25 * rho)
    return None


def local_search(s0, stats: ObjectStats, maps: MapPair, opts: SearchOptions,
                 accelerated: bool | None = None, max_halvings: int = 60) -> np.ndarray:
    """Gradient ascent on :func:`q_simplified` with ``H = (2/L) I``.

    With ``accelerated`` the constant is recomputed at every iteration from
    local map constants.  A step that leaves the domain or lowers the
    objective is halved until it does neither; if that fails the iterate
    stays put.  The objective never decreases.
    """
    if accelerated is None:
        accelerated = opts.accelerated
    s = np.array(s0, dtype=float)
    q = q_simplified(s, stats, maps)
    glob = lipschitz_L(stats, *_global_constants(maps))
    for _ in range(opts.mstep_iters):
        grad = grad_q(s, stats, maps)
        if not np.any(grad):
            break
        lip = local_step_constant(s, stats, maps) if accelerated else None
        step = (2.0 / (lip or glob)) * grad
        for _ in range(max_halvings):
            cand = s + step
            if maps.contains(cand):
                qc = q_simplified(cand, stats, maps)
                if qc >= q:
                    s, q = cand, qc
                    break
            step = 0.5 * step
        else:
            break
    return s


def choose(strategy: str, prev_s, stats: ObjectStats, maps: MapPair,
           rng: np.random.Generator, opts: SearchOptions | None = None):
    """Starting point for the local search.

    Returns ``(s, fell_back)``; ``fell_back`` is True when the strategy could
    not produce a point and the previous estimate is returned instead.
    """
    opts = opts or SearchOptions()
    prev_s = np.asarray(prev_s, dtype=float)
    if strategy == "IP":
        return prev_s.copy(), False
    if strategy == "IV":
        if not maps.f.injective:
            raise DomainError("preimage unavailable")
        if stats.empty_f:
            return prev_s.copy(), True
        try:
            return np.asarray(maps.f.preimage(stats.mean_f), dtype=float), False
        except DomainError:
            return prev_s.copy(), True
    if strategy == "IA":
        if stats.empty_g:
            return prev_s.copy(), True
        try:
            pts = maps.g.level_set_sample(stats.mean_g, opts.manifold_samples, maps.bounds, rng)
        except DomainError:
            return prev_s.copy(), True
        pts = pts[maps.contains(pts)]
        if len(pts) == 0:
            return prev_s.copy(), True
        return pts[np.argmax(q_simplified(pts, stats, maps))], False
    if strategy == "IG":
        pts = maps.bounds.uniform(rng, opts.global_samples)
        pts = pts[maps.contains(pts)]
        if len(pts) == 0:
            return prev_s.copy(), True
        return pts[np.argmax(q_simplified(pts, stats, maps))], False
    raise ValueError(f"unknown Choose strategy {strategy!r}")
