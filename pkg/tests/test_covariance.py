import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import cholesky

from inhibdesign.covariance import (
    CovarianceParams,
    _matern_bessel,
    data_covariance,
    latent_covariance,
    matern_correlation,
)
from inhibdesign.errors import ValidationError
from oracles import dense_cov, matern15


def test_matern_at_zero():
    for kappa in (0.5, 1.5, 2.5, 0.8, 3.7):
        assert matern_correlation(0.0, 0.2, kappa) == 1.0


def test_matern_closed_forms():
    assert matern_correlation(0.3, 0.3, 0.5) == pytest.approx(math.exp(-1), rel=1e-14)
    assert matern_correlation(0.3, 0.3, 1.5) == pytest.approx(2 * math.exp(-1), rel=1e-14)


@pytest.mark.parametrize("kappa", [0.5, 1.5, 2.5])
def test_bessel_route_matches_closed_form(kappa):
    u = np.logspace(-4, 1.5, 200)
    closed = matern_correlation(u, 1.0, kappa)
    assert np.allclose(_matern_bessel(u, kappa), closed, rtol=1e-10, atol=0)


def test_matern_rejects_bad_distance():
    with pytest.raises(ValidationError):
        matern_correlation(float("nan"), 0.1, 1.5)
    with pytest.raises(ValidationError):
        matern_correlation(-1.0, 0.1, 1.5)


@given(st.floats(0, 5), st.floats(0, 5), st.sampled_from([0.5, 1.0, 1.5, 2.5, 4.0]))
def test_matern_monotone(u1, u2, kappa):
    lo, hi = sorted((u1, u2))
    assert matern_correlation(lo, 0.3, kappa) >= matern_correlation(hi, 0.3, kappa)


@pytest.mark.parametrize("kappa", [0.5, 1.5, 2.5])
def test_matern_decays(kappa):
    assert matern_correlation(50 * 0.2, 0.2, kappa) < 1e-6


def test_params_validation():
    with pytest.raises(ValidationError):
        CovarianceParams(sigma2=0.0)
    with pytest.raises(ValidationError):
        CovarianceParams(tau2=-0.1)
    with pytest.raises(ValidationError):
        CovarianceParams(phi=float("inf"))


def test_latent_covariance_small_cases():
    p = CovarianceParams(2.0, 0.1, 0.3)
    assert latent_covariance([(0.5, 0.5)], p).tolist() == [[2.0]]
    assert np.all(latent_covariance([(0.1, 0.1), (0.1, 0.1)], p) == 2.0)
    assert data_covariance([(0.5, 0.5)], p).tolist() == [[2.3]]


def test_latent_covariance_elementwise(rng):
    pts = rng.random((4, 2))
    p = CovarianceParams(1.7, 0.25, 0.0, 1.5)
    assert np.allclose(latent_covariance(pts, p), dense_cov(pts, 1.7, 0.25), rtol=0, atol=1e-12)


def test_data_covariance_structure(rng):
    pts = rng.random((6, 2))
    p = CovarianceParams(1.3, 0.2, 0.4)
    lat = latent_covariance(pts, p)
    dat = data_covariance(pts, p)
    assert np.allclose(np.diag(dat), 1.7)
    off = ~np.eye(6, dtype=bool)
    assert np.array_equal(dat[off], lat[off])
    assert np.array_equal(data_covariance(pts, p.replace(tau2=0.0)), lat)
    assert np.allclose(dat, dat.T, atol=1e-12)


def test_data_covariance_positive_definite(rng):
    for _ in range(100):
        pts = rng.random((30, 2))
        p = CovarianceParams(1.0, rng.uniform(0.05, 0.5), rng.uniform(0.01, 1.0))
        cholesky(data_covariance(pts, p), lower=True)


def test_closed_form_agreement_via_oracle():
    u = np.logspace(-3, 1, 50)
    assert np.allclose(matern_correlation(u, 0.15, 1.5), matern15(u, 0.15), rtol=1e-10)
