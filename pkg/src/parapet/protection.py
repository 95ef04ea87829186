"""Protections that watch the sensor stream and may raise an adversary alert."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Protocol

import numpy as np

from .engine import (
    Bernoulli,
    Beta,
    IfElse,
    ImpossibleEvidenceError,
    Poisson,
    Uniform,
    importance_posterior,
    query,
)
from .perception import CorrelationPrior, MapData, SensorFrame, WindowAccumulator, WindowSummary, clip_rate


@dataclass(frozen=True)
class ProtectionVerdict:
    alert: bool
    alert_time: int | None
    posterior_adversary: float
    windows_evaluated: int = 0

    def __post_init__(self):
        if self.alert and self.alert_time is None:
            raise ValueError("an alert needs an alert time")
        if not 0.0 <= self.posterior_adversary <= 1.0:
            raise ValueError("posterior must lie in [0, 1]")


class ProtectionSession(Protocol):
    alerted: bool

    def frames_until_decision(self) -> int | None:
        """Frames that can pass before the protection may change its mind (None: never)."""

    def observe_arrays(self, start: int, stop: int, det: np.ndarray, gps: np.ndarray) -> None: ...

    def observe(self, frame: SensorFrame) -> None: ...

    def verdict(self) -> ProtectionVerdict: ...


class ProtectionModel(Protocol):
    name: str

    def start(self, sign_map: MapData, rng: np.random.Generator) -> ProtectionSession: ...


NO_ALERT = ProtectionVerdict(False, None, 0.0, 0)


def trivial_verdict(frames: Iterable[SensorFrame] = ()) -> ProtectionVerdict:
    return NO_ALERT


class _TrivialSession:
    alerted = False

    def frames_until_decision(self):
        return None

    def observe_arrays(self, start, stop, det, gps):
        pass

    def observe(self, frame):
        pass

    def verdict(self):
        return NO_ALERT


class TrivialProtection:
    """Never alerts."""

    name = "trivial"

    def start(self, sign_map, rng):
        return _TrivialSession()


@dataclass(frozen=True)
class SensorFusionConfig:
    window_frames: int = 10
    alert_threshold: float = 0.5
    sustain_windows: int = 2
    particles: int = 2000
    prior_adversary: float = 0.1
    poisson_legit: float = 1.0
    poisson_attack: float = 0.2
    relevance_radius_m: float = 60.0
    min_cluster_frames: int = 3

    def __post_init__(self):
        if not 0.0 < self.alert_threshold < 1.0:
            raise ValueError("alert_threshold must lie in (0, 1)")
        if self.sustain_windows < 1 or self.window_frames < 1 or self.particles < 1:
            raise ValueError("window_frames, sustain_windows and particles must be >= 1")
        if not (self.poisson_legit > 0 and self.poisson_attack > 0):
            raise ValueError("Poisson rates must be positive")
        if not 0.0 <= self.prior_adversary <= 1.0:
            raise ValueError("prior_adversary must lie in [0, 1]")


@dataclass(frozen=True)
class FusionModelParams:
    prior: CorrelationPrior
    config: SensorFusionConfig
    n_windows: int


def sensor_fusion_program(params: FusionModelParams, choose):
    """Generative model of the windowed sensor evidence.

    Without an adversary, agreement rates follow the calibrated Beta prior
    and each window holds Poisson(legit) sign clusters; with one, agreement
    is uniform and clusters are rarer.
    """
    cfg = params.config
    adversary = choose("adversary", Bernoulli(cfg.prior_adversary))
    agreement = IfElse(adversary, Uniform(0.0, 1.0), Beta(params.prior.alpha, params.prior.beta))
    clusters = IfElse(adversary, Poisson(cfg.poisson_attack), Poisson(cfg.poisson_legit))
    for i in range(params.n_windows):
        choose(f"agreement/{i}", agreement)
        choose(f"clusters/{i}", clusters)
    return adversary


def window_observations(windows: Iterable[WindowSummary], window_frames: int) -> dict:
    obs = {}
    for i, w in enumerate(windows):
        obs[f"agreement/{i}"] = float(clip_rate(w.agreement_rate, window_frames))
        obs[f"clusters/{i}"] = w.cluster_count
    return obs


@dataclass
class SensorFusionState:
    windows: WindowAccumulator
    streak: int = 0
    alerted: bool = False
    alert_time: int | None = None
    posterior_adversary: float = 0.0
    windows_evaluated: int = 0
    pending: list[WindowSummary] = field(default_factory=list)

    @classmethod
    def initial(cls, sign_map: MapData, config: SensorFusionConfig) -> "SensorFusionState":
        return cls(WindowAccumulator(sign_map, config.window_frames, config.relevance_radius_m, config.min_cluster_frames))

    @property
    def completed(self) -> list[WindowSummary]:
        return self.windows.completed


def fusion_observe(state: SensorFusionState, frame: SensorFrame) -> SensorFusionState:
    """Fold one frame into the window statistics (frames must arrive in order)."""
    done = state.windows.push_frame(frame)
    if done is not None:
        state.pending.append(done)
    return state


def adversary_posterior(windows, config: SensorFusionConfig, prior: CorrelationPrior,
                        rng: np.random.Generator) -> float:
    params = FusionModelParams(prior, config, len(windows))
    post = importance_posterior(sensor_fusion_program, params, window_observations(windows, config.window_frames),
                                config.particles, rng)
    return query(post, lambda c: c["adversary"])


def fusion_verdict(state: SensorFusionState, config: SensorFusionConfig, prior: CorrelationPrior,
                   rng: np.random.Generator) -> ProtectionVerdict:
    """Re-infer adversary presence from every completed window.

    The alert fires once the posterior exceeds the threshold on
    ``sustain_windows`` consecutive evaluations, and then stays up.
    """
    windows = state.completed
    if not windows:
        raise ValueError("no completed window to condition on")
    try:
        posterior = adversary_posterior(windows, config, prior, rng)
    except ImpossibleEvidenceError:
        posterior = 1.0
        state.streak = config.sustain_windows - 1
    state.pending.clear()
    state.windows_evaluated += 1
    state.posterior_adversary = posterior
    state.streak = state.streak + 1 if posterior > config.alert_threshold else 0
    if not state.alerted and state.streak >= config.sustain_windows:
        state.alerted = True
        state.alert_time = windows[-1].end_t
    return ProtectionVerdict(state.alerted, state.alert_time, posterior, state.windows_evaluated)


def current_verdict(state: SensorFusionState) -> ProtectionVerdict:
    return ProtectionVerdict(state.alerted, state.alert_time, state.posterior_adversary, state.windows_evaluated)


class _FusionSession:
    def __init__(self, protection: "SensorFusionProtection", sign_map: MapData, rng: np.random.Generator):
        self.protection = protection
        self.state = SensorFusionState.initial(sign_map, protection.config)
        self.rng = rng

    @property
    def alerted(self) -> bool:
        return self.state.alerted

    def frames_until_decision(self):
        return self.protection.config.window_frames - self.state.windows._n

    def observe_arrays(self, start, stop, det, gps):
        acc = self.state.windows
        for i in range(start, stop):
            done = acc.push(i + 1, bool(det[i, 0]), bool(det[i, 1]), float(gps[i]))
            if done is not None:
                self.state.pending.append(done)
                self._evaluate_one()

    def _evaluate_one(self):
        fusion_verdict(self.state, self.protection.config, self.protection.prior, self.rng)

    def observe(self, frame):
        fusion_observe(self.state, frame)
        if self.state.pending:
            self._evaluate_one()

    def verdict(self):
        return current_verdict(self.state)


class SensorFusionProtection:
    """Alerts when the detectors disagree in ways the calibrated prior cannot explain."""

    name = "fusion"

    def __init__(self, prior: CorrelationPrior, config: SensorFusionConfig = SensorFusionConfig()):
        self.prior = prior
        self.config = config

    def start(self, sign_map, rng):
        return _FusionSession(self, sign_map, rng)
