"""Tiered objective: how effective is a disturbance against a protection?"""

from __future__ import annotations

import enum
import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..adversary import Disturbance, DisturbanceBounds, conspicuousness, validate
from ..perception import PerceptionConfig
from ..protection import ProtectionModel, ProtectionVerdict
from ..scenario import RolloutResult, SafetyOutcome, ScenarioConfig, braking_distance, counterfactual, run_scenario


class Tier(enum.Enum):
    FULLY = "fully"
    MODERATE = "moderate"
    MILD = "mild"
    INEFFECTIVE = "ineffective"


TIER_ORDER = (Tier.FULLY, Tier.MODERATE, Tier.MILD, Tier.INEFFECTIVE)


@dataclass(frozen=True)
class ObjectiveConfig:
    epsilon: float = 0.15
    delta: float = 0.8
    reps: int = 20
    penalty: float = 0.2
    tier_bases: tuple[float, float, float, float] = (1.0, 0.7, 0.4, 0.1)

    def __post_init__(self):
        if not 0 < self.epsilon < 1 or not 0 < self.delta < 1:
            raise ValueError("epsilon and delta must lie in (0, 1)")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        b = self.tier_bases
        if len(b) != 4 or not b[0] > b[1] > b[2] > b[3]:
            raise ValueError("tier bases must be strictly decreasing (fully > moderate > mild > ineffective)")

    def base(self, tier: Tier) -> float:
        return self.tier_bases[TIER_ORDER.index(tier)]


class RolloutError(RuntimeError):
    def __init__(self, rep: int, seed: int, cause: Exception):
        self.rep = rep
        self.seed = seed
        super().__init__(f"rollout {rep} (seed {seed}) failed: {cause!r}")


def assign_tier(
    verdict: ProtectionVerdict,
    outcome: SafetyOutcome,
    alert_distance_m: float | None,
    speed_at_alert: float | None,
    decel: float,
    counterfactual_holds: bool | Callable[[], bool] = False,
) -> Tier:
    """Classify one rollout from the adversary's point of view.

    ``counterfactual_holds`` says whether the same rollout without the alert
    would have stopped safely; it may be a thunk, evaluated only when needed.
    """
    if not verdict.alert:
        return Tier.FULLY if not outcome.holds else Tier.INEFFECTIVE
    if alert_distance_m is not None and speed_at_alert is not None:
        if alert_distance_m < braking_distance(speed_at_alert, decel):
            return Tier.MODERATE
    holds = counterfactual_holds() if callable(counterfactual_holds) else counterfactual_holds
    return Tier.MILD if holds else Tier.INEFFECTIVE


@dataclass(frozen=True)
class RolloutRecord:
    tier: Tier
    raw_score: float
    verdict: ProtectionVerdict
    outcome: SafetyOutcome
    seed: int
    obs_digest: str


@dataclass(frozen=True)
class ScoreResult:
    effectiveness: float
    f_value: float
    tier_counts: dict
    counterexample_fraction: float
    per_rollout: tuple[RolloutRecord, ...] = field(repr=False)
    conspicuousness: float = 0.0

    @property
    def alert_rate(self) -> float:
        return float(np.mean([r.verdict.alert for r in self.per_rollout]))

    @property
    def tier_mode(self) -> Tier:
        # ties broken toward the more effective tier
        return max(TIER_ORDER, key=lambda t: (self.tier_counts[t.value], -TIER_ORDER.index(t)))

    @property
    def obs_digest(self) -> str:
        h = hashlib.sha256("".join(r.obs_digest for r in self.per_rollout).encode())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "effectiveness": self.effectiveness,
            "f": self.f_value,
            "conspicuousness": self.conspicuousness,
            "counterexample_fraction": self.counterexample_fraction,
            "alert_rate": self.alert_rate,
            "tier_counts": dict(self.tier_counts),
            "tier_mode": self.tier_mode.value,
            "verdicts": [
                {
                    "alert": r.verdict.alert,
                    "alert_time": r.verdict.alert_time,
                    "posterior_adversary": r.verdict.posterior_adversary,
                    "tier": r.tier.value,
                    "psi_holds": r.outcome.holds,
                    "crossing_speed_mps": r.outcome.crossing_speed_mps,
                }
                for r in self.per_rollout
            ],
        }


def rollout_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([seed, rep]).generate_state(1, dtype=np.uint64)[0] >> 1)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("PARAPET_THREADS", "1")))
    except ValueError:
        return 1


def score_disturbance(
    x: Disturbance | None,
    protection: ProtectionModel,
    scenario: ScenarioConfig,
    objective: ObjectiveConfig,
    seed: int,
    *,
    perception: PerceptionConfig = PerceptionConfig(),
    bounds: DisturbanceBounds = DisturbanceBounds(),
) -> ScoreResult:
    """Monte Carlo estimate of disturbance effectiveness over ``objective.reps`` rollouts."""
    if x is not None:
        validate(x, bounds)
    consp = conspicuousness(x, bounds) if x is not None else 0.0
    kw = dict(perception=perception, bounds=bounds)

    def one(rep: int) -> RolloutRecord:
        s = rollout_seed(seed, rep)
        try:
            r: RolloutResult = run_scenario(scenario, x, protection, s, **kw)
            tier = assign_tier(
                r.verdict, r.outcome, r.alert_distance_m, r.speed_at_alert_mps, scenario.brake_decel_mps2,
                lambda: counterfactual(scenario, x, s, **kw).outcome.holds,
            )
        except Exception as exc:
            raise RolloutError(rep, s, exc) from exc
        raw = max(0.0, objective.base(tier) - objective.penalty * consp)
        return RolloutRecord(tier, raw, r.verdict, r.outcome, s, r.observations.digest())

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            records = tuple(pool.map(one, range(objective.reps)))
    else:
        records = tuple(one(j) for j in range(objective.reps))
    return summarize(records, consp)


def summarize(records, consp: float = 0.0) -> ScoreResult:
    m = len(records)
    eff = sum(r.raw_score for r in records) / m
    counts = {t.value: 0 for t in TIER_ORDER}
    for r in records:
        counts[r.tier.value] += 1
    return ScoreResult(eff, 1.0 - eff, counts, counts[Tier.FULLY.value] / m, tuple(records), consp)


def is_counterexample(s: ScoreResult, objective: ObjectiveConfig) -> bool:
    return s.f_value < objective.epsilon and s.counterexample_fraction > objective.delta
