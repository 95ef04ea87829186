import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parapet.adversary import (
    Disturbance,
    DisturbanceBounds,
    DisturbanceError,
    conspicuousness,
    foreshortening,
    latin_hypercube,
    normalized_offsets,
    placement_deviation,
    sample_uniform,
    validate,
)

B = DisturbanceBounds()
REFERENCE_ROWS = [(0.0077, 0.36, 5, 22, -23), (0.0100, -0.48, -12, -3, -23), (0.0050, -0.05, 22, -22, 5)]


def disturbances(bounds=B):
    return st.tuples(*[st.floats(lo, hi) for lo, hi in bounds.intervals()]).map(lambda v: Disturbance(*v))


@pytest.mark.parametrize("row", REFERENCE_ROWS)
def test_reference_rows_are_feasible(row):
    validate(Disturbance(*row), B)


def test_validate_names_dimension():
    with pytest.raises(DisturbanceError) as e:
        validate(Disturbance(0.005, 0, 0, 0, 90.0), B)
    assert e.value.dimension == "yaw_deg"
    with pytest.raises(DisturbanceError) as e:
        validate(Disturbance(0.0, 0, 0, 0, 0), B)
    assert e.value.dimension == "strength"
    with pytest.raises(DisturbanceError):
        validate(Disturbance(0.005, math.nan, 0, 0, 0), B)


def test_bounds_reject_bad_boxes():
    with pytest.raises(ValueError):
        DisturbanceBounds(c_min=0.0)
    with pytest.raises(ValueError):
        DisturbanceBounds(c_min=0.01, c_max=0.005)
    with pytest.raises(ValueError):
        DisturbanceBounds(yaw_deg=(5.0, 5.0))


def test_conspicuousness_corners():
    assert conspicuousness(Disturbance(B.c_max, 0, 0, 0, 0), B) == 0.0
    assert conspicuousness(Disturbance(B.c_min, 0.5, 25, -25, 25), B) == pytest.approx(1.0)


def test_conspicuousness_reference_row3():
    # 0.5 * 0.7 + 0.5 * |(-0.1, 0.88, -0.88, 0.2)| / 2
    expected = 0.35 + 0.5 * math.sqrt(0.01 + 2 * 0.88**2 + 0.04) / 2
    assert conspicuousness(Disturbance(*REFERENCE_ROWS[2]), B) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.666, abs=1e-3)


def test_normalized_offsets_use_each_side():
    b = DisturbanceBounds(height_ft=(-0.25, 0.5))
    off = normalized_offsets(Disturbance(0.005, -0.25, 0, 0, 0), b)
    assert off[0] == -1.0
    assert normalized_offsets(Disturbance(0.005, 0.25, 0, 0, 0), b)[0] == 0.5


@given(disturbances(), st.floats(0.0, 1.0))
def test_conspicuousness_monotone_in_strength(x, frac):
    c2 = x.strength_c + frac * (B.c_max - x.strength_c)
    y = Disturbance(c2, *x.placement())
    assert conspicuousness(y, B) <= conspicuousness(x, B) + 1e-12


@given(disturbances(), st.integers(1, 4), st.floats(0.0, 1.0))
def test_conspicuousness_monotone_in_offsets(x, dim, frac):
    v = x.as_array()
    lo, hi = B.intervals()[dim]
    edge = hi if v[dim] >= 0 else lo
    w = v.copy()
    w[dim] = v[dim] + frac * (edge - v[dim])
    assert conspicuousness(Disturbance.from_array(w), B) >= conspicuousness(x, B) - 1e-12


@given(disturbances())
def test_deviation_measures_in_unit_interval(x):
    for f in (conspicuousness, placement_deviation, foreshortening):
        assert 0.0 <= f(x, B) <= 1.0


def test_foreshortening_extremes():
    assert foreshortening(Disturbance(0.005, 0.5, 25, 0, 0), B) == 0.0
    assert foreshortening(Disturbance(0.005, 0, 0, 25, -25), B) == pytest.approx(1.0)
    assert foreshortening(None, B) == 0.0


def test_unit_roundtrip():
    x = Disturbance(*REFERENCE_ROWS[0])
    assert np.allclose(B.from_unit(B.to_unit(x)).as_array(), x.as_array())


def test_lhs_single_point():
    pts = latin_hypercube(B, 1, np.random.default_rng(0))
    assert len(pts) == 1
    validate(pts[0], B)


def test_lhs_stratification():
    n = 100
    pts = latin_hypercube(B, n, np.random.default_rng(3))
    U = np.array([B.to_unit(x) for x in pts])
    for d in range(5):
        bins = np.minimum((U[:, d] * n).astype(int), n - 1)
        assert sorted(bins) == list(range(n))


def test_lhs_seed_sensitivity():
    a = latin_hypercube(B, 100, np.random.default_rng(1))
    b = latin_hypercube(B, 100, np.random.default_rng(2))
    assert not np.allclose([x.as_array() for x in a], [x.as_array() for x in b])


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
def test_samplers_stay_in_bounds(seed, n):
    rng = np.random.default_rng(seed)
    for x in latin_hypercube(B, n, rng):
        validate(x, B)
    validate(sample_uniform(B, rng), B)


def test_record_order_matches_table_columns():
    assert list(Disturbance(*REFERENCE_ROWS[0]).to_record()) == ["strength", "height_ft", "roll_deg", "pitch_deg", "yaw_deg"]
