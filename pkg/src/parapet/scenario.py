"""Straight-road stop-sign approach: kinematics, planner, safety property, rollouts.

Positions are metres along the approach axis. The vehicle starts at 0 and
the sign (and its stop line) stands at ``initial_distance_m``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import kernels
from .adversary import Disturbance, DisturbanceBounds, foreshortening, validate
from .perception import MapData, ObservationSequence, PerceptionConfig, attack_effect
from .protection import ProtectionModel, ProtectionVerdict, TrivialProtection


class PlannerAction(enum.Enum):
    CONTINUE = "continue"
    BRAKE = "brake"


@dataclass(frozen=True)
class ScenarioConfig:
    timestep_s: float = 0.1
    t_max: int = 200
    initial_distance_m: float = 100.0
    initial_speed_mps: float = 12.5
    brake_decel_mps2: float = 4.0
    stop_line_speed_mps: float = 0.5
    detection_window: int = 5
    detection_confidence_threshold: float = 0.5

    def __post_init__(self):
        for name in ("timestep_s", "initial_distance_m", "initial_speed_mps", "brake_decel_mps2",
                     "stop_line_speed_mps", "detection_confidence_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.t_max < 2 or self.detection_window < 1:
            raise ValueError("t_max must be >= 2 and detection_window >= 1")
        if (self.t_max - 1) * self.timestep_s * self.initial_speed_mps < self.initial_distance_m:
            raise ValueError("t_max too short for the undisturbed vehicle to reach the stop line")

    @property
    def safety(self) -> "SafetyProperty":
        return SafetyProperty(self.initial_distance_m, self.stop_line_speed_mps)


@dataclass(frozen=True)
class SignPose:
    height_ft: float = 0.0
    roll_deg: float = 0.0
    pitch_deg: float = 0.0
    yaw_deg: float = 0.0


@dataclass(frozen=True)
class WorldState:
    t: int
    vehicle_pos_m: float
    speed_mps: float
    braking: bool = False
    sign_pose: SignPose = SignPose()
    disturbance_active: bool = False


@dataclass(frozen=True)
class SafetyProperty:
    stop_line_m: float
    max_speed_at_line_mps: float

    def __post_init__(self):
        if self.stop_line_m < 0 or self.max_speed_at_line_mps < 0:
            raise ValueError("safety property fields must be nonnegative")


@dataclass(frozen=True)
class SafetyOutcome:
    holds: bool
    crossing_speed_mps: float | None


class StateSequence:
    """Ground-truth states of one rollout, stored column-wise."""

    def __init__(self, pos, speed, braking, sign_pose: SignPose = SignPose(), disturbance_active: bool = False):
        self.pos = np.asarray(pos, dtype=float)
        self.speed = np.asarray(speed, dtype=float)
        self.braking = np.asarray(braking, dtype=bool)
        self.sign_pose = sign_pose
        self.disturbance_active = disturbance_active
        if not (len(self.pos) == len(self.speed) == len(self.braking)) or len(self.pos) == 0:
            raise ValueError("state columns must be nonempty and of equal length")
        if np.any(self.speed < 0):
            raise ValueError("negative speed")

    @classmethod
    def from_states(cls, states: Sequence[WorldState]) -> "StateSequence":
        for a, b in zip(states, states[1:]):
            if b.t != a.t + 1:
                raise ValueError("state indices must increase by one")
        first = states[0]
        return cls([s.vehicle_pos_m for s in states], [s.speed_mps for s in states],
                   [s.braking for s in states], first.sign_pose, first.disturbance_active)

    def __len__(self) -> int:
        return len(self.pos)

    def __getitem__(self, i: int) -> WorldState:
        return WorldState(i + 1, float(self.pos[i]), float(self.speed[i]), bool(self.braking[i]),
                          self.sign_pose, self.disturbance_active)

    @property
    def states(self) -> list[WorldState]:
        return [self[i] for i in range(len(self))]

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)


def braking_distance(speed: float, decel: float) -> float:
    if not (math.isfinite(speed) and math.isfinite(decel)):
        raise ValueError("non-finite input")
    if decel <= 0 or speed < 0:
        raise ValueError("need decel > 0 and speed >= 0")
    return speed * speed / (2.0 * decel)


def plan_action(belief_window: Sequence[float], config: ScenarioConfig, latched: bool = False) -> PlannerAction:
    """Brake when the mean fused confidence over the recent window reaches the threshold."""
    if latched:
        return PlannerAction.BRAKE
    recent = list(belief_window)[-config.detection_window:]
    if not recent:
        return PlannerAction.CONTINUE
    total = 0.0
    for c in recent:
        total += c
    if total / len(recent) >= config.detection_confidence_threshold:
        return PlannerAction.BRAKE
    return PlannerAction.CONTINUE


def step_world(state: WorldState, action: PlannerAction, config: ScenarioConfig) -> WorldState:
    if state.t >= config.t_max:
        raise ValueError("cannot step past t_max")
    brake = action is PlannerAction.BRAKE
    v = state.speed_mps
    if brake:
        nv = v - config.brake_decel_mps2 * config.timestep_s
        nv = nv if nv > 0.0 else 0.0
    else:
        nv = v
    return replace(state, t=state.t + 1, vehicle_pos_m=state.vehicle_pos_m + v * config.timestep_s,
                   speed_mps=nv, braking=brake)


def check_safety(seq: StateSequence, psi: SafetyProperty) -> SafetyOutcome:
    """The vehicle must not pass the stop line faster than the allowed speed."""
    if len(seq) == 0:
        raise ValueError("empty state sequence")
    pos = seq.pos
    crossed = np.nonzero((pos[:-1] < psi.stop_line_m) & (pos[1:] >= psi.stop_line_m))[0]
    if len(crossed) == 0:
        return SafetyOutcome(True, None)
    v = float(seq.speed[crossed[0]])
    return SafetyOutcome(v <= psi.max_speed_at_line_mps, v)


@dataclass
class RolloutResult:
    states: StateSequence
    observations: ObservationSequence
    verdict: ProtectionVerdict
    outcome: SafetyOutcome
    alert_distance_m: float | None = None
    speed_at_alert_mps: float | None = None
    rho: float = 0.0

    def __iter__(self):
        return iter((self.states, self.observations, self.verdict, self.outcome))


def rollout_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent simulator and protection streams for one rollout seed."""
    sim, prot = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(sim), np.random.default_rng(prot)


def kernel_params(config: ScenarioConfig, perception: PerceptionConfig, x: Disturbance | None,
                  bounds: DisturbanceBounds, rho: float) -> np.ndarray:
    d1, d2 = perception.detectors
    params = np.empty(kernels.N_PARAMS)
    params[:] = (
        config.timestep_s, config.brake_decel_mps2, config.initial_distance_m, config.initial_distance_m,
        d1.range_midpoint_m, d1.range_slope, d2.range_midpoint_m, d2.range_slope,
        1.0 - 0.5 * foreshortening(x, bounds),
        attack_effect(d1, x, bounds), attack_effect(d2, x, bounds),
        math.sqrt(rho), math.sqrt(1.0 - rho),
        perception.gps_sigma_m, perception.range_noise_m,
        config.detection_confidence_threshold, float(config.detection_window),
    )
    return params


def sign_map_for(config: ScenarioConfig, perception: PerceptionConfig) -> MapData:
    return perception.sign_map or MapData((config.initial_distance_m,))


def run_scenario(
    config: ScenarioConfig,
    disturbance: Disturbance | None,
    protection: ProtectionModel,
    seed: int,
    *,
    perception: PerceptionConfig = PerceptionConfig(),
    bounds: DisturbanceBounds = DisturbanceBounds(),
    advance=None,
) -> RolloutResult:
    """Roll out one approach: perception, protection and planner in the loop.

    An alert from the protection starts the minimal-risk transition: full
    braking from the next step on, whatever the planner believes.
    """
    if disturbance is not None:
        validate(disturbance, bounds)
    advance = advance or kernels.advance
    sim_rng, prot_rng = rollout_streams(seed)
    rho_draw = float(sim_rng.uniform())
    draws = np.ascontiguousarray(sim_rng.standard_normal((6, config.t_max)))
    rho = perception.nominal_rho if disturbance is None else rho_draw
    params = kernel_params(config, perception, disturbance, bounds, rho)

    n = config.t_max
    pos = np.zeros(n)
    speed = np.zeros(n)
    braking = np.zeros(n, dtype=np.uint8)
    det = np.zeros((n, 2), dtype=np.uint8)
    conf = np.zeros((n, 2))
    est = np.full((n, 2), np.nan)
    gps = np.zeros(n)
    fused = np.zeros(n)
    crossing = np.zeros(1)
    speed[0] = config.initial_speed_mps

    session = protection.start(sign_map_for(config, perception), prot_rng)
    alert = False
    alert_distance = alert_speed = None
    i, status = 0, kernels.RUNNING
    while status == kernels.RUNNING:
        chunk = session.frames_until_decision()
        stop = n if chunk is None else i + chunk
        start = i
        i, status = advance(start, stop, alert, params, draws, pos, speed, braking, det, conf, est, gps, fused, crossing)
        session.observe_arrays(start, i, det, gps)
        if not alert and session.alerted:
            alert = True
            alert_distance = config.initial_distance_m - float(pos[i])
            alert_speed = float(speed[i])

    m = i + 1
    pose = SignPose(*disturbance.placement()) if disturbance is not None else SignPose()
    states = StateSequence(pos[:m].copy(), speed[:m].copy(), braking[:m].astype(bool), pose, disturbance is not None)
    # frame i is sensed from state i; the final state is never sensed
    obs = ObservationSequence(np.arange(1, i + 1), det[:i].astype(bool), conf[:i].copy(), est[:i].copy(),
                              gps[:i].copy(), perception.gps_sigma_m, fused[:i].copy())
    outcome = check_safety(states, config.safety)
    return RolloutResult(states, obs, session.verdict(), outcome, alert_distance, alert_speed, rho)


def counterfactual(config, disturbance, seed, **kw) -> RolloutResult:
    """Same rollout with a protection that never alerts."""
    return run_scenario(config, disturbance, TrivialProtection(), seed, **kw)


def calibration_runs(config: ScenarioConfig, perception: PerceptionConfig, n: int, seed: int) -> list[ObservationSequence]:
    """Undisturbed rollouts, each under its own weather shift of the detector ranges."""
    if n < 1:
        raise ValueError("need at least one calibration run")
    ss = np.random.SeedSequence([seed, 0xCA1])
    weather_ss, seed_ss = ss.spawn(2)
    shifts = np.random.default_rng(weather_ss).uniform(-perception.weather_shift_m, perception.weather_shift_m, n)
    seeds = seed_ss.generate_state(n, dtype=np.uint64) >> np.uint64(1)
    return [
        run_scenario(config, None, TrivialProtection(), int(s), perception=perception.with_weather(float(w))).observations
        for w, s in zip(shifts, seeds)
    ]
