"""
Logistic binomial geostatistical model and Laplace-approximate prediction.

Counts at design point ``i`` are ``Bin(m_i, p_i)`` with
``logit(p_i) = offset + S(x_i) + U_i`` and ``U_i ~ N(0, tau2)``. For
prediction, ``W_i = S(x_i) + U_i`` is treated as the latent vector with prior
covariance ``sigma2 R + tau2 I``; the grid target is ``S`` alone.

Mode finding follows the stabilised Newton iteration of Rasmussen and
Williams (GPML, algorithm 3.1), working with ``B = I + W^1/2 K W^1/2`` so the
prior covariance is never inverted.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import expit, log1p

from .covariance import data_covariance, latent_covariance
from .errors import NumericalError, ValidationError
from .gaussian_field import PredictionSurface, robust_cholesky
from .geometry import as_points


@dataclass
class BinomialData:
    counts: np.ndarray
    trials: np.ndarray
    linear_offset: float = 0.0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        self.trials = np.broadcast_to(np.asarray(self.trials, dtype=float),
                                      self.counts.shape).copy()
        if np.any(self.trials < 1):
            raise ValidationError("every location needs at least one trial")
        if np.any(self.counts < 0) or np.any(self.counts > self.trials):
            raise ValidationError("counts must lie in [0, trials]")


def simulate_binomial(realization, tau2, trials=10, offset=0.0, rng=None):
    s = np.asarray(realization.design_values, dtype=float)
    trials = np.broadcast_to(np.asarray(trials), s.shape)
    if np.any(trials < 1):
        raise ValidationError("trials must be at least 1")
    u = np.sqrt(tau2) * rng.standard_normal(len(s)) if tau2 > 0 else np.zeros(len(s))
    p = expit(offset + s + u)
    counts = rng.binomial(trials.astype(int), p)
    return BinomialData(counts, trials, offset)


def _binomial_loglik(eta, y, m):
    # log(1 + e^eta) computed without overflow
    return float(np.sum(y * eta - m * (np.maximum(eta, 0) + log1p(np.exp(-np.abs(eta))))))


@dataclass
class LaplaceFit:
    """Posterior mode of the design-point latent vector and its curvature."""

    mode: np.ndarray
    alpha: np.ndarray       # prior_cov^-1 mode
    sqrt_w: np.ndarray      # sqrt of the negative log-likelihood Hessian diagonal
    chol_b: np.ndarray      # lower factor of I + sqrt_w K sqrt_w
    prior_cov: np.ndarray
    gradient_norm: float
    iterations: int

    def posterior_cov(self):
        v = solve_triangular(self.chol_b, self.sqrt_w[:, None] * self.prior_cov,
                             lower=True, check_finite=False)
        return self.prior_cov - v.T @ v


def laplace_mode(design, data, params, offset=None, tol=1e-10, max_iter=100):
    """Newton ascent with step halving on ``log p(y | W) + log p(W)``.

    Stops when the gradient max-norm falls below ``tol * max(1, max trials)``.
    """
    pts = as_points(getattr(design, "points", design))
    offset = data.linear_offset if offset is None else offset
    y, m = data.counts, data.trials
    K = data_covariance(pts, params)
    n = len(y)
    f = np.zeros(n)
    a = np.zeros(n)

    def psi(a, f):
        return -0.5 * a @ f + _binomial_loglik(offset + f, y, m)

    def grad(a, f):
        return y - m * expit(offset + f) - a

    # gradient entries scale with the trial counts
    gtol = tol * max(1.0, float(np.max(m)))
    g = grad(a, f)
    for it in range(1, max_iter + 1):
        p = expit(offset + f)
        w = m * p * (1 - p)
        sw = np.sqrt(w)
        L = robust_cholesky(np.eye(n) + sw[:, None] * K * sw[None, :])
        b = w * f + (y - m * p)
        a_new = b - sw * cho_solve((L, True), sw * (K @ b), check_finite=False)
        cur = psi(a, f)
        step = 1.0
        while True:
            a_try = a + step * (a_new - a)
            f_try = K @ a_try
            if psi(a_try, f_try) >= cur - 1e-12 * abs(cur) or step < 1e-10:
                break
            step *= 0.5
        a, f = a_try, f_try
        g = grad(a, f)
        if np.max(np.abs(g)) < gtol:
            break
    else:
        raise NumericalError(
            f"Laplace mode not found in {max_iter} iterations "
            f"(gradient max-norm {np.max(np.abs(g)):.3g})"
        )
    p = expit(offset + f)
    sw = np.sqrt(m * p * (1 - p))
    L = robust_cholesky(np.eye(n) + sw[:, None] * K * sw[None, :])
    return LaplaceFit(f, a, sw, L, K, float(np.max(np.abs(g))), it)


def predict_latent_laplace(design, data, grid, params, offset=None, targets=None):
    """Laplace-approximate mean and variance of ``S`` on the grid.

    With ``c(x)`` the prior covariance between ``S(x)`` and the design
    latents, ``mean = c' K^-1 mode`` and
    ``variance = sigma2 - c' (K + W^-1)^-1 c``.
    """
    fit = laplace_mode(design, data, params, offset)
    pts = as_points(getattr(design, "points", design))
    tgt = grid.points if targets is None else as_points(targets)
    c = latent_covariance(pts, params, tgt)
    mean = c.T @ fit.alpha
    v = solve_triangular(fit.chol_b, fit.sqrt_w[:, None] * c, lower=True, check_finite=False)
    var = params.sigma2 - np.einsum("ij,ij->j", v, v)
    var = np.clip(var, 0.0, params.sigma2)
    return PredictionSurface(mean, var, params)
