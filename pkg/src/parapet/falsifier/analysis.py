"""Protection comparison over a shared disturbance set."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..adversary import Disturbance, DisturbanceBounds, conspicuousness, latin_hypercube
from ..perception import PerceptionConfig
from ..protection import ProtectionModel
from ..scenario import ScenarioConfig
from .objective import ObjectiveConfig, ScoreResult, score_disturbance

FT_TO_M = 0.3048
SIGN_RADIUS_M = 0.38


def placement_distance_m(x: Disturbance, radius_m: float = SIGN_RADIUS_M) -> float:
    """Euclidean displacement from the undisturbed sign.

    Height is converted to metres; each angle becomes the arc travelled by
    the sign's rim at ``radius_m``.
    """
    arcs = [radius_m * math.radians(a) for a in (x.roll_deg, x.pitch_deg, x.yaw_deg)]
    return math.sqrt((x.height_offset_ft * FT_TO_M) ** 2 + sum(a * a for a in arcs))


@dataclass
class Comparison:
    points: list[Disturbance]
    a: list[ScoreResult]
    b: list[ScoreResult]
    bounds: DisturbanceBounds

    @property
    def eff_a(self) -> np.ndarray:
        return np.array([s.effectiveness for s in self.a])

    @property
    def eff_b(self) -> np.ndarray:
        return np.array([s.effectiveness for s in self.b])

    @property
    def conspicuousness(self) -> np.ndarray:
        return np.array([conspicuousness(x, self.bounds) for x in self.points])

    @property
    def distance_m(self) -> np.ndarray:
        return np.array([placement_distance_m(x) for x in self.points])

    def separation_pvalue(self) -> float:
        """One-sided paired t-test that protection ``a`` leaves the adversary less effective than ``b``."""
        d = self.eff_a - self.eff_b
        if np.all(d == d[0]):
            return 0.0 if d[0] < 0 else 1.0
        return float(stats.ttest_rel(self.eff_a, self.eff_b, alternative="less").pvalue)

    def quiet_subset(self, max_alert_rate: float = 0.1) -> np.ndarray:
        """Indices of points on which protection ``a`` (almost) never alerts."""
        return np.array([i for i, s in enumerate(self.a) if s.alert_rate <= max_alert_rate], dtype=int)

    def trend_slope(self, min_conspicuousness: float = 0.6) -> tuple[float, int]:
        """Least-squares slope of effectiveness against conspicuousness for protection ``a``."""
        c = self.conspicuousness
        m = c > min_conspicuousness
        if m.sum() < 2:
            return float("nan"), int(m.sum())
        return float(np.polyfit(c[m], self.eff_a[m], 1)[0]), int(m.sum())


def compare_protections(
    a: ProtectionModel,
    b: ProtectionModel,
    n: int,
    seed: int,
    scenario: ScenarioConfig,
    objective: ObjectiveConfig,
    bounds: DisturbanceBounds,
    perception: PerceptionConfig = PerceptionConfig(),
) -> Comparison:
    """Score one Latin-hypercube set against both protections with paired seeds."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
    pts = latin_hypercube(bounds, n, rng)
    kw = dict(perception=perception, bounds=bounds)
    sa, sb = [], []
    for i, x in enumerate(pts):
        s = seed * 100_003 + i
        sa.append(score_disturbance(x, a, scenario, objective, s, **kw))
        sb.append(score_disturbance(x, b, scenario, objective, s, **kw))
    return Comparison(pts, sa, sb, bounds)
