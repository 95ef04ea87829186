import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize
from scipy.stats import beta as beta_dist
from scipy.stats import multivariate_normal

from parapet.adversary import Disturbance, DisturbanceBounds
from parapet.perception import (
    DEFAULT_DETECTORS,
    CorrelationPrior,
    DetectorModel,
    MapData,
    ObservationSequence,
    WindowAccumulator,
    attack_effect,
    baseline_detection_prob,
    calibrate_priors,
    clip_rate,
    fit_beta,
    gps_read,
    sense,
    window_agreement_rates,
    write_agreement_csv,
)
from parapet.scenario import WorldState

B = DisturbanceBounds()
FR, YO = DEFAULT_DETECTORS
NOMINAL = CorrelationPrior(10.0, 1.0, 0.8)


def test_baseline_examples():
    assert baseline_detection_prob(FR, FR.range_midpoint_m) == pytest.approx(0.5)
    assert baseline_detection_prob(FR, 0.0) == pytest.approx(1.0, abs=1e-4)
    assert baseline_detection_prob(FR, FR.range_midpoint_m, 1.0) == pytest.approx(0.25)
    assert baseline_detection_prob(FR, 1e6) == 0.0
    with pytest.raises(ValueError):
        baseline_detection_prob(FR, -1.0)


def test_attack_effect_examples():
    d = DetectorModel("frcnn", 60.0, 0.15, 1.0)
    b = DisturbanceBounds(c_max=0.01)
    assert attack_effect(d, Disturbance(0.005, 0, 0, 0, 0), b) == pytest.approx(0.5)
    assert attack_effect(d, None, b) == 0.0
    assert attack_effect(d, Disturbance(0.01, 0.3, 20, 10, -5), b) == 0.0


@given(st.tuples(*[st.floats(lo, hi) for lo, hi in B.intervals()]))
def test_attack_asymmetry(v):
    x = Disturbance(*v)
    assert 0.0 <= attack_effect(YO, x, B) <= attack_effect(FR, x, B) < 1.0


def test_detector_validation():
    with pytest.raises(ValueError):
        DetectorModel("frcnn", 60.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        DetectorModel("frcnn", 60.0, 0.1, 1.5)


def _frames(x, distance, n, seed, rho=None, detectors=DEFAULT_DETECTORS):
    rng = np.random.default_rng(seed)
    state = WorldState(1, 100.0 - distance, 12.5)
    return [sense(state, x, detectors, NOMINAL, rng, rho=rho) for _ in range(n)]


def test_forced_attack_suppresses_all_detections():
    dets = tuple(DetectorModel(d.id, d.range_midpoint_m, d.range_slope, 1.0, forced_effect=1.0) for d in DEFAULT_DETECTORS)
    frames = _frames(Disturbance(0.002, 0, 0, 0, 0), 5.0, 500, 0, detectors=dets)
    assert not any(f.any_detection() for f in frames)


def test_perfect_correlation_means_agreement():
    dets = (DetectorModel("frcnn", 60.0, 0.15, 1.0), DetectorModel("yolo", 60.0, 0.15, 0.3))
    frames = _frames(None, 60.0, 2000, 1, rho=1.0, detectors=dets)
    assert all(f.agree() for f in frames)


def test_marginal_at_midpoint():
    frames = _frames(None, FR.range_midpoint_m, 10_000, 2)
    rate = np.mean([f.detections[0].detected for f in frames])
    assert rate == pytest.approx(0.5, abs=0.02)


@pytest.mark.parametrize("x,distance", [
    (None, 50.0),
    (Disturbance(0.005, 0.2, -10, 15, 20), 40.0),
    (Disturbance(0.002, 0, 0, 0, 0), 10.0),
])
def test_marginals_within_three_se(x, distance):
    n = 10_000
    frames = _frames(x, distance, n, 3, rho=0.5)
    foreshort = 0.0
    if x is not None:
        from parapet.adversary import foreshortening
        foreshort = foreshortening(x, B)
    for k, d in enumerate(DEFAULT_DETECTORS):
        p = baseline_detection_prob(d, distance, foreshort) * (1 - attack_effect(d, x, B))
        rate = np.mean([f.detections[k].detected for f in frames])
        assert abs(rate - p) <= 3 * math.sqrt(p * (1 - p) / n) + 1e-12


def test_indicator_correlation_matches_bivariate_normal():
    rho = 0.8
    dets = (DetectorModel("frcnn", 60.0, 0.15, 1.0), DetectorModel("yolo", 60.0, 0.15, 0.3))
    frames = _frames(None, 60.0, 20_000, 4, rho=rho, detectors=dets)
    a = np.array([f.detections[0].detected for f in frames], dtype=float)
    b = np.array([f.detections[1].detected for f in frames], dtype=float)
    p11 = multivariate_normal(mean=[0, 0], cov=[[1, rho], [rho, 1]]).cdf([0.0, 0.0])
    oracle = (p11 - 0.25) / 0.25
    assert np.corrcoef(a, b)[0, 1] == pytest.approx(oracle, abs=0.05)


def test_frame_invariants():
    for f in _frames(Disturbance(0.004, 0.1, 5, 5, 5), 30.0, 300, 5):
        for r in f.detections:
            assert 0.0 <= r.confidence <= 1.0
            assert (r.estimated_distance_m is not None) == r.detected
        assert 0.0 <= f.fused_confidence <= 1.0
        assert f.fused_confidence == pytest.approx(0.5 * (f.detections[0].confidence + f.detections[1].confidence))


def test_gps_noise():
    rng = np.random.default_rng(6)
    state = WorldState(1, 40.0, 12.5)
    xs = np.array([gps_read(state, rng).position_m for _ in range(10_000)])
    assert 0.97 <= xs.std(ddof=1) <= 1.03
    assert abs(xs.mean() - 40.0) < 0.05
    assert gps_read(state, rng, 0.0).position_m == 40.0


def _obs(det_pairs, gps, t0=1):
    n = len(det_pairs)
    d = np.array(det_pairs, dtype=bool)
    return ObservationSequence(np.arange(t0, t0 + n), d, d * 0.9, np.where(d, 10.0, np.nan), gps, 1.0, d.mean(1) * 0.9)


SIGN = MapData((100.0,))


def test_window_agreement_examples():
    acc = WindowAccumulator(SIGN)
    w = acc.push_sequence(_obs([(True, True)] * 10, [90.0] * 10))
    assert w[0].agreement_rate == 1.0
    acc = WindowAccumulator(SIGN)
    w = acc.push_sequence(_obs([(True, True)] * 8 + [(True, False)] * 2, [90.0] * 10))
    assert w[0].agreement_rate == pytest.approx(0.8)
    acc = WindowAccumulator(SIGN)
    assert acc.push_sequence(_obs([(True, True)] * 10, [0.0] * 10)) == []


def test_clusters_need_three_consecutive_frames():
    pairs = [(True, False)] * 3 + [(False, False)] + [(False, True)] * 2 + [(False, False)] * 4
    w = WindowAccumulator(SIGN).push_sequence(_obs(pairs, [80.0] * 10))
    assert w[0].cluster_count == 1


def test_out_of_order_frame_rejected():
    acc = WindowAccumulator(SIGN)
    acc.push(5, True, True, 90.0)
    with pytest.raises(ValueError):
        acc.push(5, True, True, 90.0)


def test_fit_beta_fallback_and_moments():
    a, b = fit_beta([0.8] * 6)
    assert a / (a + b) == pytest.approx(0.8) and a + b == pytest.approx(200.0)
    a, b = fit_beta([0.6, 0.8])
    assert a / (a + b) == pytest.approx(0.7)

    # brute force: find (alpha, beta) whose Beta moments match the sample
    def gap(log_ab):
        m, v = beta_dist.stats(*np.exp(log_ab), moments="mv")
        return [m - 0.7, v - 0.01]

    oracle = np.exp(optimize.fsolve(gap, [1.0, 0.5], xtol=1e-12))
    assert (a, b) == pytest.approx(tuple(oracle), rel=1e-6)


def test_calibrate_requires_two_runs():
    o = _obs([(True, True)] * 10, [90.0] * 10)
    with pytest.raises(ValueError):
        calibrate_priors([o], SIGN)
    with pytest.raises(ValueError):
        calibrate_priors([o, _obs([(True, True)] * 10, [0.0] * 10)], SIGN)


def test_calibrate_constant_rates_fallback():
    pairs = [(True, True)] * 8 + [(True, False)] * 2
    runs = [_obs(pairs, [90.0] * 10) for _ in range(3)]
    p = calibrate_priors(runs, SIGN)
    assert p.mean == pytest.approx(0.8) and p.alpha + p.beta == pytest.approx(200.0)


def test_clip_rate():
    assert clip_rate(1.0, 10) == pytest.approx(0.95)
    assert clip_rate(0.0, 10) == pytest.approx(0.05)
    assert clip_rate(0.5, 10) == 0.5


def test_agreement_csv_roundtrip(tmp_path):
    runs = [_obs([(True, True)] * 20, [90.0] * 20), _obs([(True, False)] * 10, [90.0] * 10)]
    n = write_agreement_csv(tmp_path / "a.csv", runs, SIGN)
    with open(tmp_path / "a.csv", newline="") as fh:
        rows = list(csv.reader(fh, quoting=csv.QUOTE_NONNUMERIC))
    assert rows[0] == ["run_id", "window_index", "agreement_rate"]
    assert len(rows) == n + 1 == 4
    assert rows[3] == [1.0, 0.0, 0.0]


def test_prior_dict_roundtrip():
    p = CorrelationPrior(3.0, 1.5, 0.7)
    assert CorrelationPrior.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        CorrelationPrior(0.0, 1.0)


@settings(max_examples=30)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=10, max_size=60))
def test_window_rates_bounded(pairs):
    rates = window_agreement_rates(_obs(pairs, [90.0] * len(pairs)), SIGN)
    assert len(rates) == len(pairs) // 10
    assert all(0.0 <= r <= 1.0 for r in rates)


def test_observation_sequence_roundtrip():
    o = _obs([(True, False), (False, False), (True, True)], [1.0, 2.0, 3.0])
    back = ObservationSequence.from_frames(o.frames)
    assert back.digest() == o.digest()
    with pytest.raises(ValueError):
        ObservationSequence([2, 1], [[0, 0]] * 2, [[0, 0]] * 2, [[np.nan] * 2] * 2, [0, 0], 1.0, [0, 0])
