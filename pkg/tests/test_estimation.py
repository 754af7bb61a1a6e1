import json
import math

import numpy as np
import pytest

from inhibdesign.covariance import CovarianceParams
from inhibdesign.design import generate_si
from inhibdesign.errors import ValidationError
from inhibdesign.estimation import fit_gaussian_ml, gaussian_loglik
from inhibdesign.gaussian_field import observe_gaussian, simulate_joint
from inhibdesign.geometry import Region
from oracles import dense_loglik


def test_loglik_standard_normal_at_zero():
    ll = gaussian_loglik([(0.5, 0.5)], [0.0], CovarianceParams(0.6, 0.1, 0.4))
    assert ll == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)
    assert ll == pytest.approx(-0.9189, abs=1e-4)


def test_loglik_independence_limit():
    p = CovarianceParams(1.0, 0.01, 0.5)
    y = np.array([0.3, -1.2])
    ll = gaussian_loglik([(0, 0), (10, 10)], y, p, mean=0.2)
    expect = sum(-0.5 * math.log(2 * math.pi * 1.5) - (v - 0.2) ** 2 / 3.0 for v in y)
    assert ll == pytest.approx(expect, abs=1e-8)


def test_loglik_matches_dense(rng):
    pts = rng.random((10, 2))
    y = rng.standard_normal(10)
    ll = gaussian_loglik(pts, y, CovarianceParams(1.4, 0.2, 0.3), mean=-0.4)
    assert ll == pytest.approx(dense_loglik(pts, y, 1.4, 0.2, 0.3, -0.4), abs=1e-10)


def _simulate(seed, n=150, params=CovarianceParams(1.0, 0.15, 0.0), delta=0.05):
    rng = np.random.default_rng(seed)
    d = generate_si(n, delta, Region.unit(), rng)
    f = simulate_joint(d, None, params, rng)
    return d, observe_gaussian(f, params.tau2, rng)


@pytest.mark.parametrize("seed", range(5))
def test_fit_beats_truth_noiseless(seed):
    truth = CovarianceParams(1.0, 0.15, 0.0)
    d, y = _simulate(seed, params=truth)
    fit = fit_gaussian_ml(d, y, 1.5)
    assert fit.loglik >= gaussian_loglik(d, y, truth)
    p = fit.params_hat
    assert p.sigma2 > 0 and p.phi > 0 and p.tau2 >= 0 and p.kappa == 1.5


def test_fit_trace_nondecreasing():
    d, y = _simulate(3, params=CovarianceParams(1.0, 0.15, 0.2))
    fit = fit_gaussian_ml(d, y, 1.5)
    assert all(b >= a for a, b in zip(fit.trace, fit.trace[1:]))
    assert fit.loglik == pytest.approx(fit.trace[-1], abs=1e-6)


def test_fit_improves_on_init():
    d, y = _simulate(4, params=CovarianceParams(1.0, 0.15, 0.2))
    init = CovarianceParams(2.0, 0.05, 1.0)
    fit = fit_gaussian_ml(d, y, 1.5, init=init)
    assert fit.loglik >= gaussian_loglik(d, y, init)


def test_fit_household_like_parameters():
    truth = CovarianceParams(0.53016, 0.31913, 0.26328)
    rng = np.random.default_rng(12)
    d = generate_si(150, 0.04, Region(0, 0, 3, 3), rng)
    f = simulate_joint(d, None, truth, rng)
    y = -1.90986 + observe_gaussian(f, truth.tau2, rng)
    fit = fit_gaussian_ml(d, y, 1.5, estimate_mean=True)
    assert fit.loglik >= gaussian_loglik(d, y, truth, -1.90986)
    out = fit.to_dict()
    assert list(out)[:4] == ["intercept", "sigma2", "tau2", "phi"]
    json.loads(fit.to_json())


def test_fit_total_variance_near_sample_variance():
    # short range and small nugget: many effectively independent patches
    d, y = _simulate(8, n=400, params=CovarianceParams(1.0, 0.03, 0.05), delta=0.02)
    fit = fit_gaussian_ml(d, y, 1.5, estimate_mean=True)
    total = fit.params_hat.sigma2 + fit.params_hat.tau2
    assert abs(total - np.var(y)) <= 0.2 * np.var(y)


def test_fit_guards():
    with pytest.raises(ValidationError):
        fit_gaussian_ml(np.random.default_rng(0).random((4, 2)), np.arange(4.0))
    with pytest.raises(ValidationError, match="degenerate"):
        fit_gaussian_ml(np.random.default_rng(0).random((10, 2)), np.ones(10))
