"""Sensor maps from the latent object space into observation spaces.

Two concrete maps are provided:

* :class:`StereoMap` -- rectified binocular projection ``(x, [y,] z) ->
  (x/z, [y/z,] 1/z)``, injective on ``|z| > z_min``.
* :class:`ItdMap` -- interaural time difference between two microphones,
  ``(|s - m1| - |s - m2|) / c``.  Its level sets are hyperboloid sheets.

Every map evaluates on arrays with an arbitrary number of leading axes: an
input of shape ``(..., d)`` gives an output of shape ``(..., obs_dim)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np


class DomainError(ValueError):
    """A latent point lies outside the admissible domain of a map."""


class Box(NamedTuple):
    """Axis-aligned box ``[lo, hi]``; a zero-width side pins that coordinate."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def make(cls, lo, hi) -> "Box":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ValueError("box requires lo <= hi componentwise")
        return cls(lo, hi)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)

    def uniform(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(count, self.lo.size))

    def inflate(self, factor: float) -> "Box":
        pad = 0.5 * factor * (self.hi - self.lo)
        return Box(self.lo - pad, self.hi + pad)


@dataclass(frozen=True)
class StereoDomain:
    """Depth floor of the stereo map.

    ``max_slope`` optionally bounds the viewing cone ``|x|/z, |y|/z``.  When it
    is set, :func:`stereo_lipschitz` returns certified constants for the cone
    instead of the closed-form depth-only ones.
    """

    z_min: float
    max_slope: float | None = None

    def __post_init__(self):
        if not self.z_min >= 1:
            raise ValueError("z_min must be at least 1")


@dataclass(frozen=True)
class ItdConfig:
    mic1: np.ndarray
    mic2: np.ndarray
    c: float = 343.0
    R: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "mic1", np.asarray(self.mic1, dtype=float))
        object.__setattr__(self, "mic2", np.asarray(self.mic2, dtype=float))
        if self.mic1.shape != self.mic2.shape or self.mic1.ndim != 1:
            raise ValueError("microphones must be vectors of equal length")
        if np.allclose(self.mic1, self.mic2):
            raise ValueError("microphones must be distinct")
        if not self.c > 0:
            raise ValueError("sound speed must be positive")
        if not self.R > 1:
            raise ValueError("exclusion radius R must exceed 1")

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.mic1 - self.mic2))

    @property
    def max_itd(self) -> float:
        return self.baseline / self.c


# ---------------------------------------------------------------------------
# stereo
# ---------------------------------------------------------------------------

def stereo_eval(s) -> np.ndarray:
    """Project latent points: ``(x, y, z) -> (x/z, y/z, 1/z)`` (also in 2D)."""
    s = np.asarray(s, dtype=float)
    z = s[..., -1:]
    return np.concatenate([s[..., :-1] / z, 1.0 / z], axis=-1)


def stereo_jacobian(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    d = s.shape[-1]
    z = s[..., -1]
    jac = np.zeros(s.shape[:-1] + (d, d))
    for i in range(d - 1):
        jac[..., i, i] = 1.0 / z
        jac[..., i, -1] = -s[..., i] / z**2
    jac[..., -1, -1] = -1.0 / z**2
    return jac


def stereo_preimage(f) -> np.ndarray:
    """Invert the stereo projection: ``(u, v, d) -> (u/d, v/d, 1/d)``."""
    f = np.asarray(f, dtype=float)
    disp = f[..., -1:]
    if np.any(disp == 0):
        raise DomainError("point at infinity")
    return np.concatenate([f[..., :-1] / disp, 1.0 / disp], axis=-1)


def stereo_lipschitz(domain: StereoDomain, dim: int = 3) -> tuple[float, float]:
    """Lipschitz constants ``(L_F, L'_F)`` of the stereo map and its Jacobian.

    Without a viewing-cone bound these are ``sqrt(dim)/z_min`` and
    ``1/z_min**2``.  The second one is exceeded near the depth floor for
    off-axis points; set ``domain.max_slope`` to get constants that hold on
    the whole cone ``|x|/z <= t`` (Frobenius bounds of ``F'`` and ``F''``).
    """
    z_min = float(domain.z_min)
    if domain.max_slope is None:
        return math.sqrt(dim) / z_min, 1.0 / z_min**2
    t2 = float(domain.max_slope) ** 2
    k = dim - 1
    lip = math.sqrt(k + k * t2 + 1.0 / z_min**2) / z_min
    lip_d = math.sqrt(2 * k + 4 * k * t2 + 4.0 / z_min**2) / z_min**2
    return lip, lip_d


# ---------------------------------------------------------------------------
# interaural time difference
# ---------------------------------------------------------------------------

def itd_eval(s, cfg: ItdConfig) -> np.ndarray:
    """ITD ``(|s - mic1| - |s - mic2|) / c``; returns shape ``(...,)``."""
    s = np.asarray(s, dtype=float)
    r1 = np.linalg.norm(s - cfg.mic1, axis=-1)
    r2 = np.linalg.norm(s - cfg.mic2, axis=-1)
    return (r1 - r2) / cfg.c


def itd_jacobian(s, cfg: ItdConfig) -> np.ndarray:
    """Gradient ``(e1 - e2)/c`` with ``e_i`` the unit vector from mic i to s."""
    s = np.asarray(s, dtype=float)
    d1 = s - cfg.mic1
    d2 = s - cfg.mic2
    e1 = d1 / np.linalg.norm(d1, axis=-1, keepdims=True)
    e2 = d2 / np.linalg.norm(d2, axis=-1, keepdims=True)
    return (e1 - e2) / cfg.c


def itd_lipschitz(cfg: ItdConfig) -> tuple[float, float]:
    return cfg.baseline / (cfg.c * cfg.R), 3.0 / (cfg.c * cfg.R)


def _orthonormal_complement(axis: np.ndarray) -> np.ndarray:
    """Rows spanning the orthogonal complement of a unit vector."""
    d = axis.size
    if d == 2:
        return np.array([[-axis[1], axis[0]]])
    _, _, vt = np.linalg.svd(axis[None, :])
    return vt[1:]


def _hyperboloid_points(g_value, cfg, radial, angle=None):
    """Points of the ITD level set, parametrized by distance from the axis.

    In 2D ``radial`` is a signed offset along the unique normal direction; in
    3D it is the (nonnegative) distance to the microphone axis and ``angle``
    rotates around the axis.
    """
    centre = 0.5 * (cfg.mic1 + cfg.mic2)
    axis = (cfg.mic2 - cfg.mic1) / cfg.baseline
    focal = 0.5 * cfg.baseline
    half = 0.5 * abs(g_value) * cfg.c
    minor2 = focal**2 - half**2
    # |s - mic1| > |s - mic2| exactly when s sits on the mic2 side of the centre
    along = np.sign(g_value) * half * np.sqrt(1.0 + radial**2 / minor2)
    basis = _orthonormal_complement(axis)
    if basis.shape[0] == 1:
        offset = radial[:, None] * basis[0]
    else:
        offset = radial[:, None] * (
            np.cos(angle)[:, None] * basis[0] + np.sin(angle)[:, None] * basis[1]
        )
    return centre + along[:, None] * axis + offset


def itd_level_set_sample(g_value: float, count: int, cfg: ItdConfig, bounds: Box,
                         rng: np.random.Generator) -> np.ndarray:
    """Sample ``count`` latent points whose ITD equals ``g_value``.

    The hyperboloid sheet is parametrized by the distance from the microphone
    axis (plus a rotation angle in 3D).  The parameter range that meets
    ``bounds`` is located on a grid, sampled uniformly, and draws falling
    outside ``bounds`` or the exclusion balls are rejected.  At most
    ``10 * count`` draws are made.
    """
    if count < 1:
        raise ValueError("count must be positive")
    g_value = float(g_value)
    if not abs(g_value) < cfg.max_itd:
        raise DomainError("ITD exceeds baseline")
    dim = cfg.mic1.size
    if dim not in (2, 3):
        raise ValueError("level-set sampling supports 2D and 3D latent spaces")

    corners = np.array(np.meshgrid(*zip(bounds.lo, bounds.hi))).reshape(dim, -1).T
    centre = 0.5 * (cfg.mic1 + cfg.mic2)
    axis = (cfg.mic2 - cfg.mic1) / cfg.baseline
    rel = corners - centre
    perp = rel - np.outer(rel @ axis, axis)
    basis = _orthonormal_complement(axis)

    def admissible(points):
        ok = bounds.contains(points)
        r1 = np.linalg.norm(points - cfg.mic1, axis=-1)
        r2 = np.linalg.norm(points - cfg.mic2, axis=-1)
        return ok & (np.minimum(r1, r2) > cfg.R)

    if dim == 2:
        proj = perp @ basis[0]
        grid = np.linspace(proj.min(), proj.max(), 4001)
        hit = grid[admissible(_hyperboloid_points(g_value, cfg, grid))]
        if hit.size == 0:
            raise DomainError("level set does not meet the bounds")
        step = grid[1] - grid[0]
        lo, hi = hit.min() - step, hit.max() + step

        def draw(n):
            return _hyperboloid_points(g_value, cfg, rng.uniform(lo, hi, n))
    else:
        rmax = np.linalg.norm(perp, axis=-1).max()
        rr, aa = np.meshgrid(np.linspace(0.0, rmax, 400),
                             np.linspace(-np.pi, np.pi, 181))
        rr, aa = rr.ravel(), aa.ravel()
        ok = admissible(_hyperboloid_points(g_value, cfg, rr, aa))
        if not ok.any():
            raise DomainError("level set does not meet the bounds")
        dr, da = rmax / 399, 2 * np.pi / 180
        rlo, rhi = max(rr[ok].min() - dr, 0.0), rr[ok].max() + dr
        alo, ahi = aa[ok].min() - da, aa[ok].max() + da

        def draw(n):
            return _hyperboloid_points(g_value, cfg, rng.uniform(rlo, rhi, n),
                                       rng.uniform(alo, ahi, n))

    kept = []
    budget = 10 * count
    need = count
    while need > 0 and budget > 0:
        batch = min(budget, max(2 * need, 16))
        budget -= batch
        pts = draw(batch)
        pts = pts[admissible(pts)]
        kept.append(pts[:need])
        need -= len(kept[-1])
    if need > 0:
        raise DomainError("level set does not meet the bounds")
    return np.concatenate(kept)


def itd_level_set_batch(g_values, count: int, cfg: ItdConfig, bounds: Box,
                        rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` level-set points for each of many ITD values at once.

    Cheaper and cruder than :func:`itd_level_set_sample`: the parameter range
    comes from the corners of ``bounds`` alone and nothing is redrawn.
    Returns shape (len(g_values), count, d); rejected draws and infeasible
    values are NaN rows.
    """
    g_values = np.ravel(np.asarray(g_values, dtype=float))
    dim = cfg.mic1.size
    corners = np.array(np.meshgrid(*zip(bounds.lo, bounds.hi))).reshape(dim, -1).T
    centre = 0.5 * (cfg.mic1 + cfg.mic2)
    axis = (cfg.mic2 - cfg.mic1) / cfg.baseline
    rel = corners - centre
    perp = rel - np.outer(rel @ axis, axis)
    basis = _orthonormal_complement(axis)
    feasible = np.abs(g_values) < cfg.max_itd
    safe = np.where(feasible, g_values, 0.0)
    shape = (g_values.size, count)
    if dim == 2:
        proj = perp @ basis[0]
        radial = rng.uniform(proj.min(), proj.max(), shape)
        angle = None
    else:
        radial = rng.uniform(0.0, np.linalg.norm(perp, axis=-1).max(), shape)
        angle = rng.uniform(-np.pi, np.pi, shape).ravel()
    pts = _hyperboloid_points(np.repeat(safe, count), cfg, radial.ravel(), angle)
    pts = pts.reshape(*shape, dim)
    r1 = np.linalg.norm(pts - cfg.mic1, axis=-1)
    r2 = np.linalg.norm(pts - cfg.mic2, axis=-1)
    ok = bounds.contains(pts) & (np.minimum(r1, r2) > cfg.R) & feasible[:, None]
    pts[~ok] = np.nan
    return pts


class ShrunkDomains(NamedTuple):
    stereo: StereoDomain
    itd: ItdConfig
    fallback: bool


def local_domain_shrink(s_current, rho: float, stereo: StereoDomain,
                        itd: ItdConfig) -> ShrunkDomains:
    """Domains valid on the ball of radius ``rho`` around ``s_current``.

    ``z_min`` becomes ``|z| - rho`` and ``R`` becomes the distance to the
    nearest microphone minus ``rho``.  If either would drop to 1 or below the
    global domains are returned with ``fallback=True``.
    """
    s_current = np.asarray(s_current, dtype=float)
    if rho == 0:
        return ShrunkDomains(stereo, itd, False)
    z_loc = abs(s_current[-1]) - rho
    dist = min(np.linalg.norm(s_current - itd.mic1), np.linalg.norm(s_current - itd.mic2))
    r_loc = dist - rho
    if z_loc <= 1 or r_loc <= 1:
        return ShrunkDomains(stereo, itd, True)
    return ShrunkDomains(replace(stereo, z_min=z_loc), replace(itd, R=r_loc), False)


# ---------------------------------------------------------------------------
# map objects used by the EM engine
# ---------------------------------------------------------------------------

class SensorMap:
    """A known smooth map from the latent space into one observation space.

    Subclasses implement ``eval``, ``jacobian``, ``lipschitz`` and
    ``local_lipschitz``; ``preimage`` and ``level_set_sample`` are optional.
    """

    dim_in: int
    dim_out: int
    injective: bool = False

    def eval(self, s) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, s) -> np.ndarray:
        raise NotImplementedError

    def lipschitz(self) -> tuple[float, float]:
        """Constants of the map and its Jacobian on the global domain."""
        raise NotImplementedError

    def local_lipschitz(self, s, rho: float) -> tuple[float, float] | None:
        """Constants valid on the ball of radius ``rho``; None if unavailable."""
        return None

    def contains(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.ones(s.shape[:-1], dtype=bool)

    def preimage(self, obs) -> np.ndarray:
        raise DomainError("preimage unavailable")

    def level_set_sample(self, value, count, bounds, rng) -> np.ndarray:
        raise NotImplementedError

    def level_set_batch(self, values, count, bounds, rng) -> np.ndarray:
        """Rough level-set draws for many values; NaN rows mark rejections."""
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


class StereoMap(SensorMap):
    """Rectified stereo projection in 2D ``(x, z)`` or 3D ``(x, y, z)``."""

    injective = True

    def __init__(self, domain: StereoDomain, dim: int = 3):
        if dim not in (2, 3):
            raise ValueError("stereo map is defined for 2D or 3D latent spaces")
        self.domain = domain
        self.dim_in = self.dim_out = dim

    def eval(self, s):
        return stereo_eval(s)

    def jacobian(self, s):
        return stereo_jacobian(s)

    def lipschitz(self):
        return stereo_lipschitz(self.domain, self.dim_in)

    def local_lipschitz(self, s, rho):
        z_loc = abs(float(np.asarray(s)[-1])) - rho
        if z_loc <= 1:
            return None
        return stereo_lipschitz(replace(self.domain, z_min=z_loc), self.dim_in)

    def contains(self, s):
        s = np.asarray(s, dtype=float)
        ok = np.abs(s[..., -1]) > self.domain.z_min
        if self.domain.max_slope is not None:
            slope = np.abs(s[..., :-1]) / np.abs(s[..., -1:])
            ok &= np.all(slope <= self.domain.max_slope, axis=-1)
        return ok

    def preimage(self, obs):
        s = stereo_preimage(obs)
        if not np.all(self.contains(s)):
            raise DomainError("preimage outside the stereo domain")
        return s

    def to_config(self):
        return {"kind": "stereo", "dim": self.dim_in, "z_min": self.domain.z_min,
                "max_slope": self.domain.max_slope}


class ItdMap(SensorMap):
    """Interaural time difference of a two-microphone array."""

    dim_out = 1

    def __init__(self, cfg: ItdConfig):
        self.cfg = cfg
        self.dim_in = cfg.mic1.size

    def eval(self, s):
        return itd_eval(s, self.cfg)[..., None]

    def jacobian(self, s):
        return itd_jacobian(s, self.cfg)[..., None, :]

    def lipschitz(self):
        return itd_lipschitz(self.cfg)

    def local_lipschitz(self, s, rho):
        s = np.asarray(s, dtype=float)
        dist = min(np.linalg.norm(s - self.cfg.mic1), np.linalg.norm(s - self.cfg.mic2))
        if dist - rho <= 1:
            return None
        return itd_lipschitz(replace(self.cfg, R=dist - rho))

    def contains(self, s):
        s = np.asarray(s, dtype=float)
        r1 = np.linalg.norm(s - self.cfg.mic1, axis=-1)
        r2 = np.linalg.norm(s - self.cfg.mic2, axis=-1)
        return np.minimum(r1, r2) > self.cfg.R

    def level_set_sample(self, value, count, bounds, rng):
        return itd_level_set_sample(float(np.ravel(value)[0]), count, self.cfg, bounds, rng)

    def level_set_batch(self, values, count, bounds, rng):
        return itd_level_set_batch(np.asarray(values)[..., 0], count, self.cfg, bounds, rng)

    def to_config(self):
        return {"kind": "itd", "mic1": self.cfg.mic1.tolist(), "mic2": self.cfg.mic2.tolist(),
                "c": self.cfg.c, "R": self.cfg.R}


@dataclass
class MapPair:
    """The two sensor maps of a conjugate mixture plus a search box in S."""

    f: SensorMap
    g: SensorMap
    bounds: Box

    def __post_init__(self):
        if self.f.dim_in != self.g.dim_in or self.bounds.lo.size != self.f.dim_in:
            raise ValueError("maps and bounds must share the latent dimension")

    @property
    def dim(self) -> int:
        return self.f.dim_in

    def contains(self, s) -> np.ndarray:
        return self.f.contains(s) & self.g.contains(s)

    def to_config(self) -> dict:
        return {"f": self.f.to_config(), "g": self.g.to_config(),
                "bounds": [self.bounds.lo.tolist(), self.bounds.hi.tolist()]}


def _map_from_config(cfg: dict) -> SensorMap:
    kind = cfg.get("kind")
    if kind == "stereo":
        return StereoMap(StereoDomain(float(cfg["z_min"]), cfg.get("max_slope")),
                         int(cfg.get("dim", 3)))
    if kind == "itd":
        return ItdMap(ItdConfig(cfg["mic1"], cfg["mic2"], float(cfg.get("c", 343.0)),
                                float(cfg.get("R", 2.0))))
    raise ValueError(f"unknown map kind {kind!r}")


def maps_from_config(cfg: dict) -> MapPair:
    """Build a :class:`MapPair` from the map block of a run config."""
    lo, hi = cfg["bounds"]
    return MapPair(_map_from_config(cfg["f"]), _map_from_config(cfg["g"]), Box.make(lo, hi))
