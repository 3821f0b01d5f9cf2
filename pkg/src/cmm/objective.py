"""Per-object M-step objective and its Lipschitz certificates.

For object ``n`` the M-step maximizes, over the latent position ``s``,

    Q_n(s) = -a log(1 + D_F(s)) - b log(1 + D_G(s)) + const

where ``a``, ``b`` are the object's total responsibilities in F and G,
``D_F(s) = |F(s) - fbar|^2`` in the metric of the weighted scatter ``C_f``
(and likewise in G).  :func:`q_direct` evaluates the same objective from the
individual observations with the profiled covariances ``C + v v^T``; the two
differ by a constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mappings import MapPair

REG_SCALE = 1e-9


def _regularizer(cov: np.ndarray, fallback: float, scale: float = REG_SCALE) -> float:
    dim = cov.shape[0]
    delta = scale * np.trace(cov) / dim
    if not delta > 0:
        delta = scale * fallback if fallback > 0 else 1e-12
    return float(delta)


def _spectral(cov: np.ndarray):
    w = np.linalg.eigvalsh(cov)
    return w[0], w[-1]


@dataclass
class ObjectStats:
    """Weighted sufficient statistics of one object under the current posteriors.

    ``cov_f``/``cov_g`` already include the ``delta * I`` regularization.  The
    per-observation weights and the observations themselves are kept so that
    the direct form of the objective can be evaluated.
    """

    mass_f: float
    mass_g: float
    mean_f: np.ndarray
    mean_g: np.ndarray
    cov_f: np.ndarray
    cov_g: np.ndarray
    weights_f: np.ndarray
    weights_g: np.ndarray
    f: np.ndarray
    g: np.ndarray
    delta_f: float = 0.0
    delta_g: float = 0.0

    @property
    def empty_f(self) -> bool:
        return not self.mass_f > 0

    @property
    def empty_g(self) -> bool:
        return not self.mass_g > 0

    @cached_property
    def icov_f(self) -> np.ndarray:
        return np.linalg.inv(self.cov_f)

    @cached_property
    def icov_g(self) -> np.ndarray:
        return np.linalg.inv(self.cov_g)

    @cached_property
    def spectrum_f(self):
        """``(||C_f^-1||, cond(C_f))``."""
        lo, hi = _spectral(self.cov_f)
        return 1.0 / lo, hi / lo

    @cached_property
    def spectrum_g(self):
        lo, hi = _spectral(self.cov_g)
        return 1.0 / lo, hi / lo


def _weighted_moments(weights, data, fallback, scale):
    mass = float(weights.sum())
    dim = data.shape[1]
    if not mass > 0:
        delta = scale * fallback if fallback > 0 else 1e-12
        return 0.0, np.zeros(dim), delta * np.eye(dim), delta
    mean = weights @ data / mass
    centred = data - mean
    cov = (weights[:, None] * centred).T @ centred / mass
    cov = 0.5 * (cov + cov.T)
    delta = _regularizer(cov, fallback, scale)
    return mass, mean, cov + delta * np.eye(dim), delta


def stats_from_weights(weights_f, weights_g, f, g, reg: float = REG_SCALE) -> ObjectStats:
    """Build :class:`ObjectStats` from raw per-observation weights.

    ``reg`` sets the ridge ``delta = reg * trace(C) / dim`` added to each
    weighted scatter matrix.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    weights_f = np.asarray(weights_f, dtype=float)
    weights_g = np.asarray(weights_g, dtype=float)
    scale_f = np.trace(np.atleast_2d(np.cov(f.T))) / f.shape[1] if len(f) > 1 else 0.0
    scale_g = np.trace(np.atleast_2d(np.cov(g.T))) / g.shape[1] if len(g) > 1 else 0.0
    mf, muf, cf, df = _weighted_moments(weights_f, f, scale_f, reg)
    mg, mug, cg, dg = _weighted_moments(weights_g, g, scale_g, reg)
    return ObjectStats(mf, mg, muf, mug, cf, cg, weights_f, weights_g, f, g, df, dg)


def _mahalanobis(resid, icov):
    return np.einsum("...i,ij,...j->...", resid, icov, resid)


def discrepancies(s, stats: ObjectStats, maps: MapPair):
    """``(D_F(s), D_G(s))`` for one point or a batch of points."""
    s = np.asarray(s, dtype=float)
    dist_f = _mahalanobis(maps.f.eval(s) - stats.mean_f, stats.icov_f)
    dist_g = _mahalanobis(maps.g.eval(s) - stats.mean_g, stats.icov_g)
    return dist_f, dist_g


def q_simplified(s, stats: ObjectStats, maps: MapPair):
    """``-a log(1 + D_F(s)) - b log(1 + D_G(s))``; vectorized over leading axes of ``s``."""
    dist_f, dist_g = discrepancies(s, stats, maps)
    return -stats.mass_f * np.log1p(dist_f) - stats.mass_g * np.log1p(dist_g)


def grad_q(s, stats: ObjectStats, maps: MapPair) -> np.ndarray:
    """Gradient of :func:`q_simplified` with respect to ``s``."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    for mass, mp, mean, icov in ((stats.mass_f, maps.f, stats.mean_f, stats.icov_f),
                                 (stats.mass_g, maps.g, stats.mean_g, stats.icov_g)):
        if not mass > 0:
            continue
        resid = mean - mp.eval(s)
        w = resid @ icov
        dist = np.sum(w * resid, axis=-1)
        jac = mp.jacobian(s)
        out += 2.0 * mass * np.einsum("...ij,...i->...j", jac, w) / (1.0 + dist)[..., None]
    return out


def q_full(s, cov_f, cov_g, stats: ObjectStats, maps: MapPair) -> float:
    """Object part of the expected complete-data log-likelihood (times -2).

    Evaluates ``-sum_m w_m (|f_m - F(s)|^2_Sigma + log|Sigma|)`` and the
    G-space analogue for explicit covariances.  Returns ``-inf`` when a
    covariance is not numerically positive definite, so such a candidate
    never wins a comparison.
    """
    s = np.asarray(s, dtype=float)
    total = 0.0
    for w, data, mp, cov in ((stats.weights_f, stats.f, maps.f, cov_f),
                             (stats.weights_g, stats.g, maps.g, cov_g)):
        mass = w.sum()
        if not mass > 0:
            continue
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            return -np.inf
        resid = data - mp.eval(s)
        z = np.linalg.solve(chol, resid.T)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        total -= w @ np.sum(z * z, axis=0) + mass * logdet
    return float(total)


def profiled_covariances(s, stats: ObjectStats, maps: MapPair):
    """``C_f + v_f v_f^T`` and ``C_g + v_g v_g^T`` with ``v = mean - map(s)``."""
    vf = stats.mean_f - maps.f.eval(s)
    vg = stats.mean_g - maps.g.eval(s)
    return stats.cov_f + np.outer(vf, vf), stats.cov_g + np.outer(vg, vg)


def q_direct(s, stats: ObjectStats, maps: MapPair) -> float:
    """The M-step objective summed over observations with profiled covariances.

    The residual scatter is taken with the same ``delta * I`` ridge as
    ``C_f``/``C_g``, which adds ``-a * delta * tr(Sigma^-1)`` to the plain sum.
    With it, ``q_direct - q_simplified`` is exactly constant in ``s``.
    """
    cov_f, cov_g = profiled_covariances(s, stats, maps)
    ridge = 0.0
    for mass, delta, cov in ((stats.mass_f, stats.delta_f, cov_f),
                             (stats.mass_g, stats.delta_g, cov_g)):
        if mass > 0:
            ridge += mass * delta * np.trace(np.linalg.inv(cov))
    return q_full(s, cov_f, cov_g, stats, maps) - ridge


# ---------------------------------------------------------------------------
# Lipschitz certificates
# ---------------------------------------------------------------------------

def phi(v, mat) -> np.ndarray:
    """``|V v| / (1 + v^T V v)`` for rows of ``v``."""
    v = np.asarray(v, dtype=float)
    w = v @ mat
    return np.linalg.norm(w, axis=-1) / (1.0 + np.sum(w * v, axis=-1))


def phi_bound(mat) -> float:
    """Upper bound ``sqrt(||V||)/2`` of :func:`phi` for SPD ``V``."""
    return 0.5 * np.sqrt(np.linalg.eigvalsh(mat)[-1])


def phi_lipschitz(mat) -> float:
    """Lipschitz constant ``||V|| (1 + cond(V)/2)`` of :func:`phi`."""
    w = np.linalg.eigvalsh(mat)
    return w[-1] * (1.0 + 0.5 * w[-1] / w[0])


def _c_phi_inv(spectrum):
    norm_inv, _ = spectrum
    return 0.5 * np.sqrt(norm_inv)


def _l_phi_inv(spectrum):
    norm_inv, cond = spectrum
    return norm_inv * (1.0 + 0.5 * cond)


MapConstants = tuple[float, float]


def grad_norm_bound(stats: ObjectStats, const_f: MapConstants, const_g: MapConstants) -> float:
    """Bound on ``|grad Q(s)|`` valid wherever the map constants hold."""
    return (2.0 * const_f[0] * stats.mass_f * _c_phi_inv(stats.spectrum_f)
            + 2.0 * const_g[0] * stats.mass_g * _c_phi_inv(stats.spectrum_g))


def lipschitz_L(stats: ObjectStats, const_f: MapConstants, const_g: MapConstants) -> float:
    """Lipschitz constant of ``grad Q`` from the map constants ``(L, L')``."""
    lf, dlf = const_f
    lg, dlg = const_g
    term_f = dlf * _c_phi_inv(stats.spectrum_f) + lf**2 * _l_phi_inv(stats.spectrum_f)
    term_g = dlg * _c_phi_inv(stats.spectrum_g) + lg**2 * _l_phi_inv(stats.spectrum_g)
    return 2.0 * stats.mass_f * term_f + 2.0 * stats.mass_g * term_g


def step_radius(stats: ObjectStats, const_f: MapConstants, const_g: MapConstants) -> float:
    """Largest possible length of a ``2/L`` gradient step."""
    lip = lipschitz_L(stats, const_f, const_g)
    return 2.0 / lip * grad_norm_bound(stats, const_f, const_g)
