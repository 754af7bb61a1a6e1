"""
Matérn correlation and covariance assembly.

Parameterization: ``rho(u) = {2^(kappa-1) Gamma(kappa)}^-1 (u/phi)^kappa K_kappa(u/phi)``.
The scaled distance is ``u/phi`` with no ``sqrt(2 kappa)`` factor, the usual
convention in model-based geostatistics. Range estimates from software using
the other convention are not directly comparable.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform
from scipy.special import gammaln, kv

from .errors import ValidationError
from .geometry import as_points


@dataclass(frozen=True)
class CovarianceParams:
    sigma2: float = 1.0
    phi: float = 0.15
    tau2: float = 0.0
    kappa: float = 1.5

    def __post_init__(self):
        vals = (self.sigma2, self.phi, self.tau2, self.kappa)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"covariance parameters must be finite: {self}")
        if self.sigma2 <= 0 or self.phi <= 0 or self.kappa <= 0:
            raise ValidationError(f"sigma2, phi and kappa must be positive: {self}")
        if self.tau2 < 0:
            raise ValidationError(f"tau2 must be nonnegative: {self}")

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return CovarianceParams(**d)

    def to_dict(self):
        return asdict(self)


def matern_correlation(u, phi, kappa):
    """Matérn correlation at distance(s) ``u``; scalar in, scalar out."""
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("distances must be finite")
    if np.any(arr < 0):
        raise ValidationError("distances must be nonnegative")
    t = arr / phi
    if kappa == 0.5:
        out = np.exp(-t)
    elif kappa == 1.5:
        out = (1.0 + t) * np.exp(-t)
    elif kappa == 2.5:
        out = (1.0 + t + t * t / 3.0) * np.exp(-t)
    else:
        out = _matern_bessel(t, kappa)
    return float(out) if np.ndim(out) == 0 else out


def _matern_bessel(t, kappa):
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    pos = t > 0
    tp = t[pos]
    with np.errstate(over="ignore", invalid="ignore"):
        logc = (1.0 - kappa) * math.log(2.0) - gammaln(kappa)
        val = np.exp(logc + kappa * np.log(tp)) * kv(kappa, tp)
    # kv underflows to 0 far out and the prefactor overflows near 0
    val = np.where(np.isfinite(val), val, np.where(tp > 1.0, 0.0, 1.0))
    out[pos] = np.clip(val, 0.0, 1.0)
    return out


def distance_matrix(a, b=None):
    a = as_points(a)
    if b is None:
        if len(a) == 1:
            return np.zeros((1, 1))
        return squareform(pdist(a))
    return cdist(a, as_points(b))


def latent_covariance(points, params, other=None):
    """``sigma2 * rho(|x_i - x_j|)``; with ``other`` gives the cross-covariance."""
    d = distance_matrix(points, other)
    cov = params.sigma2 * np.asarray(matern_correlation(d, params.phi, params.kappa))
    if other is None:
        # exact symmetry despite floating-point asymmetries in pdist
        cov = 0.5 * (cov + cov.T)
    return cov


def data_covariance(points, params):
    cov = latent_covariance(points, params)
    cov[np.diag_indices_from(cov)] += params.tau2
    return cov
