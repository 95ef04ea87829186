"""Synthetic sensor stack: two correlated object detectors, GPS and a sign map.

Detections come from a shared-latent Gaussian threshold model. For detector
``k`` at a frame::

    z_k = u * sqrt(rho) + v_k * sqrt(1 - rho)      u, v_k ~ N(0, 1)
    detected_k = z_k < ndtri(p_k)

so the marginal detection probability is exactly ``p_k`` and ``rho`` is the
latent correlation between the two detectors.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtri

from .adversary import Disturbance, DisturbanceBounds, angular_deviation, foreshortening

FRCNN = "frcnn"
YOLO = "yolo"


@dataclass(frozen=True)
class DetectorModel:
    id: str
    range_midpoint_m: float
    range_slope: float
    attack_susceptibility: float
    # Test double: when set, replaces the computed attack effect whenever a
    # disturbance is present.
    forced_effect: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.attack_susceptibility <= 1.0:
            raise ValueError("attack_susceptibility must lie in [0, 1]")
        if not self.range_slope > 0:
            raise ValueError("range_slope must be positive")
        if self.forced_effect is not None and not 0.0 <= self.forced_effect <= 1.0:
            raise ValueError("forced_effect must lie in [0, 1]")


DEFAULT_DETECTORS = (
    DetectorModel(FRCNN, range_midpoint_m=68.0, range_slope=0.15, attack_susceptibility=1.0),
    DetectorModel(YOLO, range_midpoint_m=64.0, range_slope=0.15, attack_susceptibility=0.3),
)


@dataclass(frozen=True)
class GpsReading:
    position_m: float
    noise_sigma_m: float


@dataclass(frozen=True)
class MapData:
    sign_positions_m: tuple[float, ...]

    def __post_init__(self):
        pos = tuple(float(p) for p in self.sign_positions_m)
        if list(pos) != sorted(pos):
            raise ValueError("sign positions must be sorted ascending")
        object.__setattr__(self, "sign_positions_m", pos)

    def distance_to_nearest(self, position_m: float) -> float:
        if not self.sign_positions_m:
            return math.inf
        return min(abs(s - position_m) for s in self.sign_positions_m)


@dataclass(frozen=True)
class CorrelationPrior:
    alpha: float
    beta: float
    nominal_rho: float = 0.8

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("Beta shapes must be positive")
        if not 0.0 <= self.nominal_rho <= 1.0:
            raise ValueError("nominal_rho must lie in [0, 1]")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "nominal_rho": self.nominal_rho}

    @classmethod
    def from_dict(cls, d: dict) -> "CorrelationPrior":
        return cls(float(d["alpha"]), float(d["beta"]), float(d.get("nominal_rho", 0.8)))


@dataclass(frozen=True)
class PerceptionConfig:
    detectors: tuple[DetectorModel, DetectorModel] = DEFAULT_DETECTORS
    nominal_rho: float = 0.8
    gps_sigma_m: float = 1.0
    range_noise_m: float = 1.0
    # half-width of the per-run weather shift of every detector's midpoint
    weather_shift_m: float = 10.0
    # None: a single mapped sign at the scenario's true sign position
    sign_map: MapData | None = None

    def with_weather(self, shift_m: float) -> "PerceptionConfig":
        dets = tuple(
            DetectorModel(d.id, d.range_midpoint_m + shift_m, d.range_slope, d.attack_susceptibility, d.forced_effect)
            for d in self.detectors
        )
        return PerceptionConfig(dets, self.nominal_rho, self.gps_sigma_m, self.range_noise_m, self.weather_shift_m, self.sign_map)


@dataclass(frozen=True)
class DetectorReading:
    detected: bool
    confidence: float
    estimated_distance_m: float | None


@dataclass(frozen=True)
class SensorFrame:
    t: int
    detections: tuple[DetectorReading, DetectorReading]
    gps: GpsReading
    fused_confidence: float

    def agree(self) -> bool:
        return self.detections[0].detected == self.detections[1].detected

    def any_detection(self) -> bool:
        return self.detections[0].detected or self.detections[1].detected


def _logistic_tail(a: float) -> float:
    # 1 / (1 + exp(a)), written identically in the compiled kernel
    if a > 700.0:
        return 0.0
    return 1.0 / (1.0 + math.exp(a))


def baseline_detection_prob(detector: DetectorModel, distance: float, placement_dev: float = 0.0) -> float:
    """Undisturbed detection probability at ``distance`` metres from the sign."""
    if distance < 0:
        raise ValueError("distance must be nonnegative")
    p = _logistic_tail(detector.range_slope * (distance - detector.range_midpoint_m))
    return p * (1.0 - 0.5 * placement_dev)


def attack_effect(detector: DetectorModel, x: Disturbance | None, bounds: DisturbanceBounds) -> float:
    """Fraction of detections the perturbation suppresses on ``detector``.

    Weaker perturbations (larger ``c``) suppress less; tilting the sign away
    from the pose the perturbation was optimized for also weakens it.
    """
    if x is None:
        return 0.0
    if detector.forced_effect is not None:
        return detector.forced_effect
    strength = 1.0 - x.strength_c / bounds.c_max
    return detector.attack_susceptibility * strength * (1.0 - 0.5 * angular_deviation(x, bounds))


def detection_probabilities(detectors, distance, x, bounds) -> tuple[float, float]:
    dev = foreshortening(x, bounds)
    return tuple(
        baseline_detection_prob(d, distance, dev) * (1.0 - attack_effect(d, x, bounds)) for d in detectors
    )


def frame_from_draws(
    t: int,
    distance: float,
    position: float,
    probs: Sequence[float],
    rho: float,
    draws: Sequence[float],
    gps_sigma: float,
    range_noise: float,
) -> SensorFrame:
    """Build one frame from the six standard-normal draws (u, v1, v2, gps, w1, w2)."""
    u, v1, v2, g, w1, w2 = draws
    sr = math.sqrt(rho)
    s1r = math.sqrt(1.0 - rho)
    readings = []
    for p, v, w in zip(probs, (v1, v2), (w1, w2)):
        z = u * sr + v * s1r
        det = bool(z < float(ndtri(p)))
        if det:
            readings.append(DetectorReading(True, p, max(0.0, distance + range_noise * w)))
        else:
            readings.append(DetectorReading(False, 0.0, None))
    fused = 0.5 * (readings[0].confidence + readings[1].confidence)
    return SensorFrame(t, tuple(readings), GpsReading(position + gps_sigma * g, gps_sigma), fused)


def sense(
    state,
    x: Disturbance | None,
    detectors: tuple[DetectorModel, DetectorModel],
    prior: CorrelationPrior,
    rng: np.random.Generator,
    *,
    bounds: DisturbanceBounds | None = None,
    sign_position_m: float = 100.0,
    gps_sigma_m: float = 1.0,
    range_noise_m: float = 1.0,
    rho: float | None = None,
) -> SensorFrame:
    """Sense a single world state.

    Without a disturbance the latent correlation is ``prior.nominal_rho``;
    with one it is drawn uniformly on [0, 1] unless ``rho`` is given.
    """
    bounds = bounds or DisturbanceBounds()
    if rho is None:
        rho = prior.nominal_rho if x is None else float(rng.uniform())
    distance = max(0.0, sign_position_m - state.vehicle_pos_m)
    probs = detection_probabilities(detectors, distance, x, bounds)
    draws = rng.standard_normal(6)
    return frame_from_draws(state.t, distance, state.vehicle_pos_m, probs, rho, draws, gps_sigma_m, range_noise_m)


def gps_read(state, rng: np.random.Generator, sigma: float = 1.0) -> GpsReading:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return GpsReading(state.vehicle_pos_m + sigma * float(rng.standard_normal()), sigma)


class ObservationSequence:
    """Columnar store of sensor frames for one rollout.

    Arrays are indexed by frame; ``t`` holds the 1-based step index.
    """

    def __init__(self, t, detected, confidence, est_distance, gps, gps_sigma, fused):
        self.t = np.asarray(t, dtype=np.int64)
        self.detected = np.asarray(detected, dtype=bool).reshape(-1, 2)
        self.confidence = np.asarray(confidence, dtype=float).reshape(-1, 2)
        self.est_distance = np.asarray(est_distance, dtype=float).reshape(-1, 2)
        self.gps = np.asarray(gps, dtype=float)
        self.gps_sigma = float(gps_sigma)
        self.fused = np.asarray(fused, dtype=float)
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("frame indices must be strictly increasing")

    @classmethod
    def from_frames(cls, frames: Sequence[SensorFrame]) -> "ObservationSequence":
        n = len(frames)
        est = np.full((n, 2), np.nan)
        for i, f in enumerate(frames):
            for k in range(2):
                if f.detections[k].estimated_distance_m is not None:
                    est[i, k] = f.detections[k].estimated_distance_m
        sigma = frames[0].gps.noise_sigma_m if frames else 0.0
        return cls(
            [f.t for f in frames],
            [[d.detected for d in f.detections] for f in frames],
            [[d.confidence for d in f.detections] for f in frames],
            est,
            [f.gps.position_m for f in frames],
            sigma,
            [f.fused_confidence for f in frames],
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> SensorFrame:
        readings = tuple(
            DetectorReading(
                bool(self.detected[i, k]),
                float(self.confidence[i, k]),
                float(self.est_distance[i, k]) if self.detected[i, k] else None,
            )
            for k in range(2)
        )
        return SensorFrame(int(self.t[i]), readings, GpsReading(float(self.gps[i]), self.gps_sigma), float(self.fused[i]))

    @property
    def frames(self) -> list[SensorFrame]:
        return [self[i] for i in range(len(self))]

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.t, self.detected, self.confidence, np.nan_to_num(self.est_distance, nan=-1.0), self.gps, self.fused):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class WindowSummary:
    index: int
    end_t: int
    agreement_rate: float
    cluster_count: int


@dataclass
class WindowAccumulator:
    """Cuts a frame stream into agreement windows near mapped signs.

    Only frames whose GPS position lies within ``relevance_radius_m`` of a
    mapped sign count. A window closes after ``window_frames`` relevant
    frames; an irrelevant frame discards the partial window. A cluster is a
    run of at least ``min_cluster_frames`` consecutive frames in which some
    detector fires.
    """

    sign_map: MapData
    window_frames: int = 10
    relevance_radius_m: float = 60.0
    min_cluster_frames: int = 3
    last_t: int | None = None
    completed: list[WindowSummary] = field(default_factory=list)
    _n: int = 0
    _agree: int = 0
    _run: int = 0
    _clusters: int = 0

    def _reset_partial(self):
        self._n = self._agree = self._run = self._clusters = 0

    def push(self, t: int, det1: bool, det2: bool, gps_position: float) -> WindowSummary | None:
        if self.last_t is not None and t <= self.last_t:
            raise ValueError(f"frame t={t} arrived after t={self.last_t}")
        self.last_t = t
        if self.sign_map.distance_to_nearest(gps_position) > self.relevance_radius_m:
            self._reset_partial()
            return None
        self._n += 1
        self._agree += det1 == det2
        if det1 or det2:
            self._run += 1
        else:
            if self._run >= self.min_cluster_frames:
                self._clusters += 1
            self._run = 0
        if self._n < self.window_frames:
            return None
        if self._run >= self.min_cluster_frames:
            self._clusters += 1
        summary = WindowSummary(len(self.completed), t, self._agree / self._n, self._clusters)
        self.completed.append(summary)
        self._reset_partial()
        return summary

    def push_frame(self, frame: SensorFrame) -> WindowSummary | None:
        return self.push(frame.t, frame.detections[0].detected, frame.detections[1].detected, frame.gps.position_m)

    def push_sequence(self, obs: ObservationSequence, start: int = 0, stop: int | None = None) -> list[WindowSummary]:
        stop = len(obs) if stop is None else stop
        out = []
        for i in range(start, stop):
            s = self.push(int(obs.t[i]), bool(obs.detected[i, 0]), bool(obs.detected[i, 1]), float(obs.gps[i]))
            if s is not None:
                out.append(s)
        return out


def window_agreement_rates(obs: ObservationSequence, sign_map: MapData, window_frames: int = 10,
                           relevance_radius_m: float = 60.0) -> list[float]:
    acc = WindowAccumulator(sign_map, window_frames, relevance_radius_m)
    return [w.agreement_rate for w in acc.push_sequence(obs)]


def clip_rate(rate, window_frames: int = 10):
    """Keep agreement rates off the Beta support's endpoints (half-frame margin)."""
    eps = 0.5 / window_frames
    return np.clip(rate, eps, 1.0 - eps)


def fit_beta(rates: Iterable[float], concentration: float = 200.0) -> tuple[float, float]:
    """Method-of-moments Beta fit.

    Falls back to a Beta with the sample mean and ``alpha + beta =
    concentration`` when the sample variance is zero or too large for a
    valid moment match.
    """
    r = np.asarray(list(rates), dtype=float)
    if r.size == 0:
        raise ValueError("no agreement rates to fit")
    m = float(r.mean())
    v = float(r.var())
    if not 0.0 < m < 1.0:
        raise ValueError(f"mean agreement {m} must lie strictly inside (0, 1)")
    # round-off leaves identical rates with a variance of ~1e-33, not 0
    if v <= 1e-12 or v >= m * (1.0 - m):
        return m * concentration, (1.0 - m) * concentration
    common = m * (1.0 - m) / v - 1.0
    return m * common, (1.0 - m) * common


def calibrate_priors(
    undisturbed_runs: Sequence[ObservationSequence],
    sign_map: MapData,
    *,
    window_frames: int = 10,
    relevance_radius_m: float = 60.0,
    nominal_rho: float = 0.8,
) -> CorrelationPrior:
    """Fit the no-adversary agreement prior from undisturbed rollouts.

    Window rates from all runs are pooled, since the protection scores each
    window separately.
    """
    if len(undisturbed_runs) < 2:
        raise ValueError("calibration needs at least two runs")
    rates = []
    for i, obs in enumerate(undisturbed_runs):
        run_rates = window_agreement_rates(obs, sign_map, window_frames, relevance_radius_m)
        if not run_rates:
            raise ValueError(f"run {i} has no complete agreement window")
        rates.extend(run_rates)
    alpha, beta = fit_beta(clip_rate(np.asarray(rates), window_frames))
    return CorrelationPrior(alpha, beta, nominal_rho)


def write_agreement_csv(path, runs: Sequence[ObservationSequence], sign_map: MapData,
                        window_frames: int = 10, relevance_radius_m: float = 60.0) -> int:
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC)
        w.writerow(["run_id", "window_index", "agreement_rate"])
        for run_id, obs in enumerate(runs):
            for j, rate in enumerate(window_agreement_rates(obs, sign_map, window_frames, relevance_radius_m)):
                w.writerow([run_id, j, rate])
                rows += 1
    return rows
