import math

import numpy as np
import pytest

from inhibdesign.covariance import CovarianceParams
from inhibdesign.design import delta_for_k, generate_si
from inhibdesign.errors import ValidationError
from inhibdesign.gaussian_field import FieldSimulator, apv, krige, observe_gaussian
from inhibdesign.harness import (
    ExperimentSpec,
    aggregate,
    compare_designs,
    replicate_rng,
    run_experiment,
    run_icp_sweep,
    run_replicate,
    run_si_sweep,
)


def small_spec(**kw):
    base = dict(n=30, deltas=[0.05], phis=[0.15], tau2s=[0.0], replicates=4,
                grid_resolution=10, base_seed=11, estimate_params=False)
    base.update(kw)
    return ExperimentSpec(**base)


def test_same_seed_same_report():
    a = run_experiment(small_spec())
    b = run_experiment(small_spec())
    assert a.raw == b.raw
    assert a.cells == b.cells


def test_different_seed_changes_report():
    a = run_experiment(small_spec())
    b = run_experiment(small_spec(base_seed=12))
    assert a.cells[0]["mean_apv"] != b.cells[0]["mean_apv"]


def test_single_replicate_matches_hand_pipeline():
    spec = small_spec(replicates=1)
    report = run_experiment(spec)
    cell = spec.cells()[0]
    rng = replicate_rng(spec.base_seed, 0, 0)
    d = generate_si(spec.n, 0.05, spec.grid.region, rng)
    truth = CovarianceParams(1.0, 0.15, 0.0)
    y = observe_gaussian(FieldSimulator(d, None, truth).draw(rng), 0.0, rng)
    expected = apv(krige(d, y, spec.grid, truth), spec.grid)
    assert cell["cell"] == 0
    assert report.cells[0]["mean_apv"] == pytest.approx(expected, rel=1e-12)
    assert report.cells[0]["n_ok"] == 1
    assert report.cells[0]["se_apv"] == 0.0


def test_order_and_partial_completion_do_not_matter():
    spec = small_spec(deltas=[0.02, 0.06], replicates=3)
    full = run_experiment(spec)
    # feed half the rows back in reverse order as if resumed
    partial = list(reversed(full.raw[::2]))
    resumed = run_experiment(spec, completed=partial)
    assert resumed.cells == full.cells


def test_worker_count_does_not_change_results():
    spec = small_spec(replicates=3)
    par = run_experiment(spec, workers=2)
    ser = run_experiment(spec, workers=1)
    assert [r["apv"] for r in par.raw] == [r["apv"] for r in ser.raw]
    assert par.cells[0]["mean_apv"] == ser.cells[0]["mean_apv"]


def test_cells_record_design_parameters():
    spec = ExperimentSpec(family="icp", n=100, ks=[0, 20], delta0=0.05, replicates=1,
                          estimate_params=False)
    c0, c20 = spec.cells()
    assert c0["delta_used"] == 0.05 and c0["zeta_used"] is None
    dk = delta_for_k(0.05, 100, 20)
    assert c20["delta_used"] == pytest.approx(dk)
    assert c20["zeta_used"] == pytest.approx(dk / 2)


def test_compare_identical_reports_is_zero():
    r = run_experiment(small_spec())
    cmp = compare_designs(r, r, {"delta": 0.05})
    assert cmp.difference == 0.0
    assert cmp.z == 0.0


def test_compare_mismatched_cells_raises():
    a = run_experiment(small_spec())
    b = run_experiment(small_spec(tau2s=[0.2]))
    with pytest.raises(ValidationError):
        compare_designs(a, b, {"delta": 0.05})
    with pytest.raises(ValidationError):
        compare_designs(a, a, {"delta": 0.99})


@pytest.mark.slow
def test_se_shrinks_like_root_s():
    # design-only variability with known parameters: cheap and on a fixed cell
    spec = dict(n=40, deltas=[0.05], replicates=100, grid_resolution=16,
                base_seed=3, estimate_params=False)
    se100 = run_experiment(ExperimentSpec(**spec)).cells[0]["se_apv"]
    se400 = run_experiment(ExperimentSpec(**dict(spec, replicates=400))).cells[0]["se_apv"]
    assert se400 / se100 == pytest.approx(0.5, rel=0.25)


@pytest.mark.slow
def test_icp_k0_overlaps_si_cell():
    common = dict(n=50, delta0=0.05, replicates=60, grid_resolution=16,
                  estimate_params=False, base_seed=5)
    icp = run_icp_sweep(ExperimentSpec(family="icp", ks=[0], **common))
    si = run_si_sweep(ExperimentSpec(family="si", deltas=[0.05], **common))
    a, b = icp.cells[0], si.cells[0]
    # same streams and k = 0 reduces to SI, so the cells coincide exactly
    assert abs(a["mean_apv"] - b["mean_apv"]) <= 1.96 * math.hypot(a["se_apv"], b["se_apv"])


def test_binomial_icp_end_to_end():
    spec = ExperimentSpec(model="binomial", family="icp", n=40, ks=[0, 5], delta0=0.05,
                          tau2s=[0.4], replicates=2, grid_resolution=8, trials=10)
    r = run_icp_sweep(spec)
    assert [c["n_ok"] for c in r.cells] == [2, 2]
    assert all(0 < c["mean_apv"] < 1 for c in r.cells)


def test_fixed_design_and_mspe_columns():
    spec = small_spec(fixed_design=True, compute_mspe=True, tau2s=[0.1])
    r = run_experiment(spec)
    assert math.isfinite(r.cells[0]["mean_mspe"])
    # one design for every replicate means one APV value
    assert np.ptp([row["apv"] for row in r.raw]) == 0.0


def test_failures_are_counted_and_alarmed():
    spec = small_spec(replicates=3)
    cells = spec.cells()
    raw = [dict(run_replicate(spec, cells[0], 0))]
    raw.append(dict(raw[0], rep=1, failed=1, apv=math.nan, reason="x"))
    (rec,) = aggregate(spec, cells, raw)
    assert rec["failures"] == 1 and rec["n_ok"] == 1 and rec["failure_alarm"] == 1


@pytest.mark.parametrize("bad", [
    {"model": "poisson"},
    {"family": "icp", "ks": [80], "n": 100},
    {"replicates": 0},
    {"base_seed": -1},
    {"model": "binomial", "estimate_params": True},
])
def test_invalid_specs(bad):
    with pytest.raises(ValidationError):
        ExperimentSpec(**bad)


def test_unknown_field_rejected():
    with pytest.raises(ValidationError, match="bogus"):
        ExperimentSpec.from_dict({"bogus": 1})


def test_sweep_family_guards():
    with pytest.raises(ValidationError):
        run_si_sweep(ExperimentSpec(family="icp", ks=[0], replicates=1))
    with pytest.raises(ValidationError):
        run_icp_sweep(small_spec())
