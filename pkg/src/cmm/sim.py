"""Synthetic audio-visual scenes with known ground truth.

The presets place three objects in a 2D latent plane ``(x, z)`` observed by
a rectified stereo pair, ``(x, z) -> (x/z, 1/z)``, and by two microphones at
``(-100, 0)`` and ``(100, 0)`` measuring the interaural time difference with
unit propagation speed.

=========  ==================================================  ===============
preset     object positions                                    disparity noise
=========  ==================================================  ===============
GoodSep    (-300, 1000), (10, 800), (500, 1500)                1e-4
PoorSep    (-300, 1000), (10, 800), (100, 1500)                1e-4
PoorPrec   (-300, 1000), (10, 800), (500, 1500)                5e-4
=========  ==================================================  ===============
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .mappings import Box, ItdConfig, ItdMap, MapPair, StereoDomain, StereoMap
from .model import Assignment, ModelParams, ObservationSet

PRESETS = ("GoodSep", "PoorSep", "PoorPrec")

SIGMA_U = 0.01
SIGMA_D = 1e-4
SIGMA_G = 0.5
INLIERS = 300
OUTLIER_FRACTION = 0.1
BOX_INFLATION = 0.1


@dataclass
class Scenario:
    """Everything needed to generate one synthetic data set.

    ``box_f``/``box_g`` fix the outlier supports; when None they are the
    bounding boxes of the inliers grown by ``BOX_INFLATION`` of their width.
    """

    name: str
    truth: np.ndarray
    inliers: int
    outliers_f: int
    outliers_g: int
    noise_f: np.ndarray
    noise_g: np.ndarray
    box_f: Box | None = None
    box_g: Box | None = None
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.truth = np.atleast_2d(np.asarray(self.truth, dtype=float))
        self.noise_f = np.asarray(self.noise_f, dtype=float)
        self.noise_g = np.asarray(self.noise_g, dtype=float)
        if min(self.inliers, self.outliers_f, self.outliers_g) < 0:
            raise ValueError("counts must be nonnegative")
        n = len(self.truth)
        if len(self.noise_f) != n or len(self.noise_g) != n:
            raise ValueError("one noise matrix per object is required")
        for cov in (*self.noise_f, *self.noise_g):
            if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov)[0] < 0:
                raise ValueError("noise matrices must be symmetric positive semidefinite")

    @property
    def n_objects(self) -> int:
        return len(self.truth)

    def to_dict(self) -> dict:
        out = {"name": self.name, "truth": self.truth.tolist(), "inliers": self.inliers,
               "outliers_f": self.outliers_f, "outliers_g": self.outliers_g,
               "noise_f": self.noise_f.tolist(), "noise_g": self.noise_g.tolist(),
               "seed": self.seed}
        for key, box in (("box_f", self.box_f), ("box_g", self.box_g)):
            out[key] = None if box is None else [box.lo.tolist(), box.hi.tolist()]
        return out

    @classmethod
    def from_dict(cls, cfg: dict) -> "Scenario":
        """Build a scenario from a config block.

        A block naming a preset may override ``seed``, ``inliers`` and the
        outlier counts; any other name requires the full description.
        """
        name = cfg.get("name", "Custom")
        if name in PRESETS:
            sc = scenario_preset(name, seed=int(cfg.get("seed", 0)),
                                 inliers=int(cfg.get("inliers", INLIERS)))
            if "outliers_f" in cfg:
                sc.outliers_f = int(cfg["outliers_f"])
            if "outliers_g" in cfg:
                sc.outliers_g = int(cfg["outliers_g"])
            return sc
        boxes = {k: None if cfg.get(k) is None else Box.make(*cfg[k]) for k in ("box_f", "box_g")}
        return cls(name, cfg["truth"], int(cfg["inliers"]), int(cfg["outliers_f"]),
                   int(cfg["outliers_g"]), cfg["noise_f"], cfg["noise_g"],
                   boxes["box_f"], boxes["box_g"], int(cfg.get("seed", 0)))


def preset_maps() -> MapPair:
    """Stereo and ITD maps shared by all presets, with the latent search box."""
    stereo = StereoMap(StereoDomain(z_min=100.0), dim=2)
    itd = ItdMap(ItdConfig([-100.0, 0.0], [100.0, 0.0], c=1.0, R=50.0))
    return MapPair(stereo, itd, Box.make([-1000.0, 400.0], [1000.0, 2500.0]))


def scenario_preset(name: str, seed: int = 0, inliers: int = INLIERS) -> Scenario:
    """One of the three reference scenes."""
    truth = {
        "GoodSep": [(-300.0, 1000.0), (10.0, 800.0), (500.0, 1500.0)],
        "PoorSep": [(-300.0, 1000.0), (10.0, 800.0), (100.0, 1500.0)],
        "PoorPrec": [(-300.0, 1000.0), (10.0, 800.0), (500.0, 1500.0)],
    }
    if name not in truth:
        raise ValueError(f"unknown scenario {name!r}")
    sigma_d = SIGMA_D * (5.0 if name == "PoorPrec" else 1.0)
    n = len(truth[name])
    noise_f = np.tile(np.diag([SIGMA_U**2, sigma_d**2]), (n, 1, 1))
    noise_g = np.full((n, 1, 1), SIGMA_G**2)
    outliers = int(round(OUTLIER_FRACTION * inliers * n))
    return Scenario(name, truth[name], inliers, outliers, outliers, noise_f, noise_g, seed=seed)


def _gaussian(rng, mean, cov, count):
    # eigen factor so that singular (e.g. zero) noise is allowed
    w, v = np.linalg.eigh(cov)
    root = v * np.sqrt(np.clip(w, 0.0, None))
    return mean + rng.standard_normal((count, len(mean))) @ root.T


def _support(box, inliers, dim):
    if box is not None:
        return box
    if len(inliers) == 0:
        raise ValueError("an explicit support box is needed when there are no inliers")
    lo, hi = inliers.min(axis=0), inliers.max(axis=0)
    width = np.where(hi > lo, hi - lo, np.maximum(np.abs(hi), 1.0))
    return Box.make(lo - 0.5 * BOX_INFLATION * width, hi + 0.5 * BOX_INFLATION * width)


def simulate(scenario: Scenario, maps: MapPair, rng: np.random.Generator | None = None):
    """Draw a data set; returns ``(ObservationSet, Assignment)`` of true labels.

    Labels run from 1 to N; outliers carry N+1.  Without ``rng`` the
    scenario seed drives the generator, so the output depends only on the
    scenario.
    """
    rng = rng if rng is not None else np.random.default_rng(scenario.seed)
    N = scenario.n_objects
    parts_f, parts_g, lab_f, lab_g = [], [], [], []
    for n, s in enumerate(scenario.truth):
        parts_f.append(_gaussian(rng, maps.f.eval(s), scenario.noise_f[n], scenario.inliers))
        parts_g.append(_gaussian(rng, maps.g.eval(s), scenario.noise_g[n], scenario.inliers))
        lab_f.append(np.full(scenario.inliers, n + 1))
        lab_g.append(np.full(scenario.inliers, n + 1))
    r, p = maps.f.dim_out, maps.g.dim_out
    inl_f = np.concatenate(parts_f).reshape(-1, r)
    inl_g = np.concatenate(parts_g).reshape(-1, p)
    box_f = _support(scenario.box_f, inl_f, r)
    box_g = _support(scenario.box_g, inl_g, p)
    f = np.concatenate([inl_f, box_f.uniform(rng, scenario.outliers_f)])
    g = np.concatenate([inl_g, box_g.uniform(rng, scenario.outliers_g)])
    labels_f = np.concatenate(lab_f + [np.full(scenario.outliers_f, N + 1)]).astype(int)
    labels_g = np.concatenate(lab_g + [np.full(scenario.outliers_g, N + 1)]).astype(int)
    perm_f = rng.permutation(len(f))
    perm_g = rng.permutation(len(g))
    meta = {"scenario": scenario.to_dict(), "seed": scenario.seed,
            "noise": {"f": scenario.noise_f.tolist(), "g": scenario.noise_g.tolist()},
            "truth": scenario.truth.tolist(), "maps": maps.to_config()}
    obs = ObservationSet(f[perm_f], g[perm_g], box_f.volume, box_g.volume, box_f, box_g, meta)
    return obs, Assignment(labels_f[perm_f], labels_g[perm_g])


@dataclass
class ErrorTable:
    """Per-object localization errors after optimal matching.

    ``match[i]`` is the estimated object paired with true object ``i``.
    Each ``abs_*``/``rel_*`` array has one entry per true object.
    """

    match: np.ndarray
    abs_s: np.ndarray
    rel_s: np.ndarray
    abs_f: np.ndarray
    rel_f: np.ndarray
    abs_g: np.ndarray
    rel_g: np.ndarray

    def rows(self) -> list[dict]:
        cols = ("abs_s", "rel_s", "abs_f", "rel_f", "abs_g", "rel_g")
        return [{"object": i + 1, "matched": int(self.match[i]) + 1,
                 **{c: float(getattr(self, c)[i]) for c in cols}}
                for i in range(len(self.match))]


def _errors(est, ref):
    err = np.linalg.norm(est - ref, axis=-1)
    size = np.linalg.norm(ref, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(size > 0, err / size, np.where(err > 0, np.inf, 0.0))
    return err, rel


def error_report(estimate, truth, maps: MapPair) -> ErrorTable:
    """Match estimates to truth (Hungarian, Euclidean cost in S) and tabulate
    absolute and relative errors in S, F and G."""
    est = estimate.positions if isinstance(estimate, ModelParams) else np.asarray(estimate, float)
    est = np.atleast_2d(est)
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape != truth.shape:
        raise ValueError("estimate and truth describe different numbers of objects")
    cost = np.linalg.norm(truth[:, None, :] - est[None, :, :], axis=-1)
    rows, cols = linear_sum_assignment(cost)
    match = cols[np.argsort(rows)]
    est = est[match]
    abs_s, rel_s = _errors(est, truth)
    abs_f, rel_f = _errors(maps.f.eval(est), maps.f.eval(truth))
    abs_g, rel_g = _errors(maps.g.eval(est), maps.g.eval(truth))
    return ErrorTable(match, abs_s, rel_s, abs_f, rel_f, abs_g, rel_g)
