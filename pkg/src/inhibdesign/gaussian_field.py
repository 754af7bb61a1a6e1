"""
Gaussian-field simulation, simple kriging and the prediction-variance criteria.

The latent field ``S`` has mean zero and Matérn covariance; measurements are
``Y = S + noise`` with nugget variance ``tau2``. Prediction targets ``S``
itself, so the nugget enters only the data covariance.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.spatial.distance import pdist, squareform

from .covariance import CovarianceParams, data_covariance, latent_covariance
from .errors import NumericalError
from .geometry import Region, as_points

#: relative diagonal jitter tried, in order, when a factorization fails
JITTER_STEPS = (0.0, 1e-10, 1e-8)


def robust_cholesky(cov, scale=1.0):
    """Lower Cholesky factor, escalating diagonal jitter ``scale * JITTER_STEPS``."""
    for jitter in JITTER_STEPS:
        try:
            a = cov if jitter == 0 else cov + jitter * scale * np.eye(len(cov))
            return cholesky(a, lower=True, check_finite=False)
        except LinAlgError:
            continue
    try:
        cond = np.linalg.cond(cov)
    except LinAlgError:
        cond = np.inf
    raise NumericalError(
        f"covariance of size {len(cov)} not positive definite after jitter "
        f"{JITTER_STEPS[-1]:g}*sigma2 (condition number {cond:.3g})"
    )


@dataclass(frozen=True)
class PredictionGrid:
    """Cell centres of a regular ``nx`` by ``ny`` partition of a region."""

    region: Region
    nx: int = 64
    ny: int = 64

    @property
    def points(self):
        r = self.region
        gx = r.xmin + (np.arange(self.nx) + 0.5) * r.width / self.nx
        gy = r.ymin + (np.arange(self.ny) + 0.5) * r.height / self.ny
        xx, yy = np.meshgrid(gx, gy)
        return np.column_stack([xx.ravel(), yy.ravel()])

    @property
    def cell_area(self):
        return self.region.area / (self.nx * self.ny)

    def __len__(self):
        return self.nx * self.ny


@dataclass
class FieldRealization:
    design_values: np.ndarray
    grid_values: np.ndarray
    params: CovarianceParams
    seed: int = None


@dataclass
class PredictionSurface:
    mean: np.ndarray
    variance: np.ndarray
    params_used: CovarianceParams


def _points(design):
    return as_points(getattr(design, "points", design))


class FieldSimulator:
    """Joint sampler of ``S`` at design and grid points from one factorization.

    Construct once and call :meth:`draw` repeatedly when the design is fixed.
    """

    def __init__(self, design, grid, params):
        self.n = len(_points(design))
        pts = _points(design)
        if grid is not None:
            pts = np.vstack([pts, grid.points])
        self.params = params
        self.chol = robust_cholesky(latent_covariance(pts, params), params.sigma2)

    def draw(self, rng):
        z = rng.standard_normal(len(self.chol))
        s = self.chol @ z
        grid_values = s[self.n:] if len(s) > self.n else None
        return FieldRealization(s[: self.n], grid_values, self.params)


def simulate_joint(design, grid, params, rng):
    """One draw of ``(S_design, S_grid)``; ``grid=None`` skips the grid."""
    return FieldSimulator(design, grid, params).draw(rng)


def observe_gaussian(realization, tau2, rng):
    s = np.asarray(realization.design_values, dtype=float)
    if tau2 < 0:
        raise ValueError("tau2 must be nonnegative")
    if tau2 == 0:
        return s.copy()
    return s + np.sqrt(tau2) * rng.standard_normal(len(s))


def _check_duplicates(pts):
    if len(pts) < 2:
        return
    d = squareform(pdist(pts))
    np.fill_diagonal(d, np.inf)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    if d[i, j] == 0:
        raise NumericalError(
            f"singular data covariance: design points {min(i, j)} and {max(i, j)} "
            f"coincide and tau2 = 0"
        )


def krige(design, y, grid, params, mean=0.0, targets=None):
    """Simple kriging of ``S`` on the grid (or at ``targets``) with known mean.

    ``mean(x) = mu + c(x)' K^-1 (y - mu)`` and
    ``variance(x) = sigma2 - c(x)' K^-1 c(x)``, with ``K`` the data
    covariance at the design points.
    """
    pts = _points(design)
    y = np.asarray(y, dtype=float)
    if len(y) != len(pts):
        raise ValueError(f"{len(y)} data values for {len(pts)} design points")
    if params.tau2 == 0:
        _check_duplicates(pts)
    L = robust_cholesky(data_covariance(pts, params), params.sigma2)
    tgt = grid.points if targets is None else as_points(targets)
    c = latent_covariance(pts, params, tgt)
    v = solve_triangular(L, c, lower=True, check_finite=False)
    w = solve_triangular(L, y - mean, lower=True, check_finite=False)
    pred = mean + v.T @ w
    var = params.sigma2 - np.einsum("ij,ij->j", v, v)
    var = np.clip(var, 0.0, params.sigma2)
    return PredictionSurface(pred, var, params)


def apv_integral(surface, grid):
    """Riemann-sum integral of the prediction variance over the region."""
    return float(np.sum(surface.variance) * grid.cell_area)


def apv(surface, grid):
    """Average prediction variance: the integral divided by the region area."""
    return apv_integral(surface, grid) / grid.region.area


def mspe(surface, realization, grid):
    """Spatially averaged squared prediction error against the simulated truth."""
    err = np.asarray(surface.mean) - np.asarray(realization.grid_values)
    if len(err) != len(grid):
        raise ValueError("surface and realization do not share the grid")
    return float(np.mean(err * err))
