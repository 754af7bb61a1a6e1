"""
Maximum-likelihood fitting of the Matérn-plus-nugget Gaussian model.

The smoothness ``kappa`` is held fixed. The signal variance (and the constant
mean, when requested) is profiled out in closed form, leaving a search over
``log phi`` and ``log nu`` with ``nu = tau2 / sigma2``. The ``nu = 0``
boundary is searched separately as a one-dimensional profile in ``phi``.
"""

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize, minimize_scalar

from .covariance import CovarianceParams, data_covariance, distance_matrix, matern_correlation
from .errors import NumericalError, ValidationError
from .gaussian_field import robust_cholesky
from .geometry import as_points

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
NU_MIN, NU_MAX = 1e-8, 1e3
#: restart offsets applied to the starting (log phi, log nu)
RESTART_OFFSETS = ((0.0, 0.0), (math.log(3.0), -math.log(3.0)), (-math.log(3.0), math.log(3.0)))


@dataclass
class FitResult:
    params_hat: CovarianceParams
    mean_hat: float
    loglik: float
    converged: bool
    iterations: int
    trace: list = field(default_factory=list)

    def to_dict(self):
        """Natural-scale estimates in the order intercept, sigma2, tau2, phi."""
        p = self.params_hat
        return {
            "intercept": self.mean_hat,
            "sigma2": p.sigma2,
            "tau2": p.tau2,
            "phi": p.phi,
            "kappa": p.kappa,
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def gaussian_loglik(design, y, params, mean=0.0):
    """Log density of ``y`` under ``N(mean * 1, sigma2 R + tau2 I)``."""
    pts = as_points(getattr(design, "points", design))
    r = np.asarray(y, dtype=float) - mean
    L = robust_cholesky(data_covariance(pts, params), params.sigma2)
    z = solve_triangular(L, r, lower=True, check_finite=False)
    return float(-0.5 * (len(r) * LOG_2PI + z @ z) - np.sum(np.log(np.diag(L))))


class _Profile:
    """Profile log-likelihood in ``(phi, nu)`` for one dataset."""

    def __init__(self, pts, y, kappa, estimate_mean):
        self.d = distance_matrix(pts)
        self.y = y
        self.n = len(y)
        self.kappa = kappa
        self.estimate_mean = estimate_mean
        self.evals = 0

    def solve(self, phi, nu):
        self.evals += 1
        R = np.asarray(matern_correlation(self.d, phi, self.kappa))
        R[np.diag_indices_from(R)] += nu
        L = robust_cholesky(R)
        cf = (L, True)
        if self.estimate_mean:
            ones = np.ones(self.n)
            ri1 = cho_solve(cf, ones, check_finite=False)
            beta = float(ri1 @ self.y / (ri1 @ ones))
        else:
            beta = 0.0
        res = self.y - beta
        q = float(res @ cho_solve(cf, res, check_finite=False))
        sigma2 = q / self.n
        ll = -0.5 * self.n * (LOG_2PI + math.log(sigma2) + 1.0) - np.sum(np.log(np.diag(L)))
        return float(ll), sigma2, beta

    def negll(self, theta):
        try:
            ll, _, _ = self.solve(math.exp(theta[0]), math.exp(theta[1]))
        except NumericalError:
            return np.inf
        return -ll if np.isfinite(ll) else np.inf


def fit_gaussian_ml(design, y, kappa=1.5, init=None, estimate_mean=False):
    """Maximum-likelihood estimates of ``(sigma2, phi, tau2)`` with ``kappa`` fixed.

    Nelder-Mead over ``(log phi, log nu)`` from three starts, plus a bounded
    scalar search over ``log phi`` at ``nu = 0``. The best of these is
    returned; ``converged`` reflects the simplex run that produced the
    best interior point, or the scalar search if the boundary won.
    """
    pts = as_points(getattr(design, "points", design))
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 5:
        raise ValidationError(f"need at least 5 observations to fit, got {n}")
    if len(pts) != n:
        raise ValidationError(f"{n} values for {len(pts)} locations")
    if np.ptp(y) == 0:
        raise ValidationError("degenerate data: all values are equal")

    span = float(np.max(np.ptp(pts, axis=0)))
    dmin = float(np.min(distance_matrix(pts)[np.triu_indices(n, 1)]))
    phi_lo = max(span * 1e-3, 1e-12)
    phi_hi = span * 10.0
    if init is None:
        init = CovarianceParams(float(np.var(y)), 0.1 * span, 0.5 * float(np.var(y)), kappa)
    nu0 = min(max(init.tau2 / init.sigma2, NU_MIN * 10), NU_MAX / 10)
    start = np.array([math.log(init.phi), math.log(nu0)])
    bounds = [(math.log(phi_lo), math.log(phi_hi)), (math.log(NU_MIN), math.log(NU_MAX))]

    prof = _Profile(pts, y, kappa, estimate_mean)
    best = (np.inf, None, False)
    trace = []
    iterations = 0
    for off in RESTART_OFFSETS:
        x0 = np.clip(start + off, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(prof.negll, x0, method="Nelder-Mead", bounds=bounds,
                       options={"xatol": 1e-6, "fatol": 1e-10, "maxiter": 2000})
        iterations += res.nit
        if res.fun < best[0]:
            best = (res.fun, (math.exp(res.x[0]), math.exp(res.x[1])), bool(res.success))
        trace.append(-best[0])

    # nu = 0 boundary; skipped when coincident locations make R singular
    if dmin > 0:
        res = minimize_scalar(lambda t: _negll_nu0(prof, t), bounds=bounds[0],
                              method="bounded", options={"xatol": 1e-6})
        iterations += res.nit
        if res.fun < best[0]:
            best = (res.fun, (math.exp(res.x), 0.0), bool(res.success))
        trace.append(-best[0])

    if best[1] is None:
        raise NumericalError("likelihood could not be evaluated at any starting point")
    phi, nu = best[1]
    _, sigma2, beta = prof.solve(phi, nu)
    params = CovarianceParams(sigma2, phi, sigma2 * nu, kappa)
    loglik = gaussian_loglik(pts, y, params, beta)
    if not best[2]:
        logger.info("ML fit did not meet the simplex convergence tolerance")
    return FitResult(params, beta, loglik, best[2], iterations, trace)


def _negll_nu0(prof, log_phi):
    try:
        ll, _, _ = prof.solve(math.exp(log_phi), 0.0)
    except NumericalError:
        return np.inf
    return -ll if np.isfinite(ll) else np.inf
