"""Conjugate mixture model: parameters, observations and densities.

Each observation space carries an ``(N+1)``-component mixture: ``N`` Gaussian
components whose means are the images of the latent object positions under
the sensor maps, plus one uniform outlier component over a box of volume
``V`` (F-space) or ``U`` (G-space).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .mappings import Box, MapPair

LOG_2PI = np.log(2.0 * np.pi)


class CovarianceError(ValueError):
    """Raised for a covariance matrix that is not symmetric positive definite."""


class ZeroDensityError(ValueError):
    """An observation has zero density under every mixture component."""


def cholesky(cov) -> np.ndarray:
    """Lower Cholesky factor(s); works on stacks of matrices."""
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise CovarianceError("covariance not positive definite") from None


def gaussian_logpdf(x, mean, cov=None, chol=None) -> np.ndarray:
    """Log of the multivariate normal density, vectorized over rows of ``x``.

    Both the determinant and the Mahalanobis form come from one triangular
    factor of ``cov`` (pass ``chol`` to reuse one).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if chol is None:
        chol = cholesky(cov)
    dim = chol.shape[0]
    if x.shape[-1] != dim or np.shape(mean)[-1] != dim:
        raise ValueError("dimension mismatch between x, mean and covariance")
    z = solve_triangular(chol, (x - mean).T, lower=True)
    maha = np.sum(z * z, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (dim * LOG_2PI + logdet + maha)


def gaussian_density(x, mean, cov) -> float:
    """Density of ``N(mean, cov)`` at a single point ``x``."""
    return float(np.exp(gaussian_logpdf(x, mean, cov)[0]))


@dataclass
class ModelParams:
    """Full parameter set of a conjugate mixture with ``N`` objects.

    Attributes
    ----------
    priors_f, priors_g : ndarray, shape (N+1,)
        Component priors in F and G; the last entry is the outlier prior.
    positions : ndarray, shape (N, d)
        Latent object positions (the tying parameters).
    cov_f : ndarray, shape (N, r, r)
    cov_g : ndarray, shape (N, p, p)

    Instances are treated as immutable once built; the Cholesky factors are
    cached on first use.
    """

    priors_f: np.ndarray
    priors_g: np.ndarray
    positions: np.ndarray
    cov_f: np.ndarray
    cov_g: np.ndarray

    def __post_init__(self):
        self.priors_f = np.asarray(self.priors_f, dtype=float)
        self.priors_g = np.asarray(self.priors_g, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim == 1:
            self.positions = self.positions[None, :]
        self.cov_f = np.asarray(self.cov_f, dtype=float)
        self.cov_g = np.asarray(self.cov_g, dtype=float)

    @classmethod
    def outliers_only(cls, d: int, r: int, p: int) -> "ModelParams":
        """The ``N = 0`` model: one uniform component per space."""
        return cls(np.ones(1), np.ones(1), np.zeros((0, d)), np.zeros((0, r, r)),
                   np.zeros((0, p, p)))

    @property
    def n_objects(self) -> int:
        return self.priors_f.size - 1

    @cached_property
    def chol_f(self) -> np.ndarray:
        return cholesky(self.cov_f)

    @cached_property
    def chol_g(self) -> np.ndarray:
        return cholesky(self.cov_g)

    def validate(self, tol: float = 1e-12) -> None:
        for name, pri in (("priors_f", self.priors_f), ("priors_g", self.priors_g)):
            if np.any(pri < 0) or abs(pri.sum() - 1.0) > tol:
                raise ValueError(f"{name} must be nonnegative and sum to 1")
        if self.priors_g.size != self.priors_f.size:
            raise ValueError("prior vectors must have the same length")
        n = self.n_objects
        if len(self.cov_f) != n or len(self.cov_g) != n:
            raise ValueError("one covariance per object is required in each space")
        for cov in (*self.cov_f, *self.cov_g):
            if not np.allclose(cov, cov.T, rtol=1e-10, atol=0):
                raise CovarianceError("covariance not symmetric")
        if n:
            self.chol_f, self.chol_g  # noqa: B018  raises on non-SPD

    def permuted(self, order) -> "ModelParams":
        order = np.asarray(order)
        full = np.append(order, self.n_objects)
        return ModelParams(self.priors_f[full], self.priors_g[full], self.positions[order],
                           self.cov_f[order], self.cov_g[order])

    def copy(self) -> "ModelParams":
        return ModelParams(self.priors_f.copy(), self.priors_g.copy(), self.positions.copy(),
                           self.cov_f.copy(), self.cov_g.copy())


@dataclass
class ObservationSet:
    """Observations in the two spaces and the outlier supports.

    ``box_f`` / ``box_g`` are optional; when given, the support volumes must
    match their volumes and every observation must lie inside.
    """

    f: np.ndarray
    g: np.ndarray
    support_f: float
    support_g: float
    box_f: Box | None = None
    box_g: Box | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.f = np.atleast_2d(np.asarray(self.f, dtype=float))
        self.g = np.asarray(self.g, dtype=float)
        if self.g.ndim == 1:
            self.g = self.g[:, None]
        if len(self.f) < 1 or len(self.g) < 1:
            raise ValueError("both spaces need at least one observation")
        if not (self.support_f > 0 and self.support_g > 0):
            raise ValueError("support volumes must be positive")
        for box, data, vol, name in ((self.box_f, self.f, self.support_f, "F"),
                                     (self.box_g, self.g, self.support_g, "G")):
            if box is None:
                continue
            if not np.isclose(box.volume, vol, rtol=1e-9):
                raise ValueError(f"{name}-space support volume does not match its box")
            if not np.all(box.contains(data)):
                raise ValueError(f"{name}-space observation outside the support box")

    @property
    def M(self) -> int:
        return len(self.f)

    @property
    def K(self) -> int:
        return len(self.g)


@dataclass
class Assignment:
    """Hard labels in ``1..N+1`` (``N+1`` marks an outlier)."""

    labels_f: np.ndarray
    labels_g: np.ndarray


def component_logpdf_f(x, params: ModelParams, maps: MapPair) -> np.ndarray:
    """``log N(x_m; F(s_n), Sigma_n)`` for all rows and objects, shape (M, N)."""
    x = np.atleast_2d(x)
    means = maps.f.eval(params.positions)
    out = np.empty((len(x), params.n_objects))
    for n in range(params.n_objects):
        out[:, n] = gaussian_logpdf(x, means[n], chol=params.chol_f[n])
    return out


def component_logpdf_g(x, params: ModelParams, maps: MapPair) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    means = maps.g.eval(params.positions)
    out = np.empty((len(x), params.n_objects))
    for n in range(params.n_objects):
        out[:, n] = gaussian_logpdf(x, means[n], chol=params.chol_g[n])
    return out


def joint_log_terms(obs: ObservationSet, params: ModelParams, maps: MapPair):
    """Weighted log-terms ``log(prior_n * density_n)`` including the outlier column.

    Returns two arrays of shape (M, N+1) and (K, N+1).
    """
    with np.errstate(divide="ignore"):
        lpf = np.log(params.priors_f)
        lpg = np.log(params.priors_g)
    tf = np.empty((obs.M, params.n_objects + 1))
    tg = np.empty((obs.K, params.n_objects + 1))
    tf[:, :-1] = component_logpdf_f(obs.f, params, maps) + lpf[:-1]
    tg[:, :-1] = component_logpdf_g(obs.g, params, maps) + lpg[:-1]
    tf[:, -1] = lpf[-1] - np.log(obs.support_f)
    tg[:, -1] = lpg[-1] - np.log(obs.support_g)
    return tf, tg


def _mixture_density(logpdf, x, priors, support):
    terms = logpdf
    with np.errstate(divide="ignore"):
        lp = np.log(priors)
    vals = np.concatenate([terms + lp[:-1], np.full((len(terms), 1), lp[-1] - np.log(support))],
                          axis=1)
    return np.exp(logsumexp(vals, axis=1))


def mixture_density_f(x, params: ModelParams, maps: MapPair, support: float):
    """F-space mixture density; scalar for a single point, array for rows."""
    single = np.ndim(x) == 1
    out = _mixture_density(component_logpdf_f(x, params, maps), x, params.priors_f, support)
    return float(out[0]) if single else out


def mixture_density_g(x, params: ModelParams, maps: MapPair, support: float):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 or (x.ndim == 1 and maps.g.dim_out > 1)
    x = np.atleast_1d(x)
    if x.ndim == 1:
        x = x[:, None] if maps.g.dim_out == 1 else x[None, :]
    out = _mixture_density(component_logpdf_g(x, params, maps), x, params.priors_g, support)
    return float(out[0]) if single else out


def log_likelihood(obs: ObservationSet, params: ModelParams, maps: MapPair) -> float:
    """Observed-data log-likelihood, accumulated with a per-row log-sum-exp."""
    tf, tg = joint_log_terms(obs, params, maps)
    rows = np.concatenate([logsumexp(tf, axis=1), logsumexp(tg, axis=1)])
    if not np.all(np.isfinite(rows)):
        raise ZeroDensityError("zero-density observation")
    return float(rows.sum())
