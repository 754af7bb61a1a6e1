import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from inhibdesign.errors import ValidationError
from inhibdesign.geometry import (
    CandidateSet,
    Region,
    distance,
    min_pairwise_distance,
    packing_density,
    uniform_in_disc,
    uniform_in_region,
)
from oracles import brute_min_distance

coord = st.floats(-1e3, 1e3, allow_nan=False)
point = st.tuples(coord, coord)


@pytest.mark.parametrize("a, b, expected", [
    ((0, 0), (0, 0), 0.0),
    ((0, 0), (3, 4), 5.0),
    ((0.1, 0.2), (0.4, 0.6), 0.5),
])
def test_distance_examples(a, b, expected):
    assert distance(a, b) == pytest.approx(expected, abs=1e-15)


@given(point, point, point)
def test_distance_is_a_metric(a, b, c):
    assert distance(a, b) >= 0
    assert distance(a, b) == distance(b, a)
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9
    assert (distance(a, a)) == 0


def test_min_pairwise_distance_examples():
    assert min_pairwise_distance([(0, 0), (1, 0), (0, 3)]) == 1.0
    assert min_pairwise_distance([(0, 0), (0, 0)]) == 0.0


def test_min_pairwise_distance_matches_scan(rng):
    pts = rng.random((10, 2))
    assert min_pairwise_distance(pts) == pytest.approx(brute_min_distance(pts), rel=1e-14)


def test_min_pairwise_distance_needs_two_points():
    with pytest.raises(ValidationError):
        min_pairwise_distance([(0.5, 0.5)])


def test_packing_density_values(unit):
    assert packing_density(150, 0.06, unit) == pytest.approx(0.42412, abs=1e-4)
    assert packing_density(75, 0.085, unit) == pytest.approx(0.4256, abs=1e-4)
    d = 1e-3
    assert packing_density(1, d, unit) == pytest.approx(math.pi * d * d / 4, rel=1e-14)


@given(st.integers(1, 500), st.floats(1e-3, 0.1))
def test_packing_density_scaling(n, delta):
    r = Region.unit()
    base = packing_density(n, delta, r)
    assert packing_density(2 * n, delta, r) == pytest.approx(2 * base, rel=1e-12)
    assert packing_density(n, 2 * delta, r) == pytest.approx(4 * base, rel=1e-12)


def test_packing_density_infeasible_logs(unit, caplog):
    assert packing_density(1000, 0.1, unit) > 1
    assert "infeasible" in caplog.text


def test_region_rejects_degenerate():
    with pytest.raises(ValidationError):
        Region(0, 0, 0, 1)


def test_uniform_in_thin_region(rng):
    r = Region(0.0, 0.0, 1e-12, 1.0)
    p = uniform_in_region(r, rng)
    assert r.contains(p)[0]


def test_uniform_in_region_moments(rng, unit):
    pts = uniform_in_region(unit, rng, size=100_000)
    se = math.sqrt(1 / 12 / len(pts))
    assert np.all(np.abs(pts.mean(0) - 0.5) < 3 * se)
    assert stats.kstest(pts[:, 0], "uniform").pvalue > 0.01


def test_uniform_in_disc(rng):
    c = np.array([0.3, -0.2])
    radius = 0.7
    pts = uniform_in_disc(c, radius, rng, size=100_000)
    r = np.hypot(*(pts - c).T)
    assert np.all(r <= radius)
    # area-uniform: P(r < R/2) = 1/4
    frac = np.mean(r < radius / 2)
    assert abs(frac - 0.25) < 3 * math.sqrt(0.25 * 0.75 / len(pts))
    # each coordinate has variance R^2/4 about the centre
    se = math.sqrt(radius**2 / 4 / len(pts))
    assert np.all(np.abs(pts.mean(0) - c) < 3 * se)


@settings(max_examples=200)
@given(point, st.floats(1e-6, 10.0), st.integers(0, 2**32 - 1))
def test_uniform_in_disc_containment(center, radius, seed):
    p = uniform_in_disc(center, radius, np.random.default_rng(seed))
    assert math.hypot(p[0] - center[0], p[1] - center[1]) <= radius * (1 + 1e-12) + 1e-12


def test_candidate_set_dedup_and_ids(caplog):
    cs = CandidateSet([(0, 0), (1, 1), (0, 0)], ["a", "b", "c"])
    d = cs.deduplicated()
    assert len(d) == 2 and d.ids == ["a", "b"]
    assert "coincident" in caplog.text
    with pytest.raises(ValidationError):
        CandidateSet([(0, 0), (1, 1)], ["a", "a"])
