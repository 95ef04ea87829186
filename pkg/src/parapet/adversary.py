"""Adversary model: the static stop-sign disturbance and its bounded space.

A disturbance is a physical artifact, so a single value holds for a whole
rollout. Five parameters, in the column order used by every report:
perturbation strength ``c``, height offset (feet), roll, pitch and yaw
(degrees).
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np
from scipy.stats import qmc

FIELD_NAMES = ("strength", "height_ft", "roll_deg", "pitch_deg", "yaw_deg")


class DisturbanceError(ValueError):
    """Raised when a disturbance leaves its admissible box."""

    def __init__(self, dimension: str, value: float, lo: float, hi: float):
        self.dimension = dimension
        super().__init__(f"{dimension}={value!r} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class Disturbance:
    strength_c: float
    height_offset_ft: float = 0.0
    roll_deg: float = 0.0
    pitch_deg: float = 0.0
    yaw_deg: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "Disturbance":
        return cls(*(float(v) for v in values))

    def placement(self) -> tuple[float, float, float, float]:
        return (self.height_offset_ft, self.roll_deg, self.pitch_deg, self.yaw_deg)

    def to_record(self) -> dict[str, float]:
        return dict(zip(FIELD_NAMES, astuple(self)))


@dataclass(frozen=True)
class DisturbanceBounds:
    c_min: float = 0.002
    c_max: float = 0.012
    height_ft: tuple[float, float] = (-0.5, 0.5)
    roll_deg: tuple[float, float] = (-25.0, 25.0)
    pitch_deg: tuple[float, float] = (-25.0, 25.0)
    yaw_deg: tuple[float, float] = (-25.0, 25.0)

    def __post_init__(self):
        if not self.c_min > 0:
            raise ValueError("c_min must be positive")
        for name, (lo, hi) in zip(FIELD_NAMES, self.intervals()):
            if not lo < hi:
                raise ValueError(f"empty interval for {name}: [{lo}, {hi}]")
        for name, (lo, hi) in zip(FIELD_NAMES[1:], self.intervals()[1:]):
            if not lo <= 0.0 <= hi:
                raise ValueError(f"{name} range must contain the nominal placement 0")

    def intervals(self) -> list[tuple[float, float]]:
        return [
            (self.c_min, self.c_max),
            tuple(self.height_ft),
            tuple(self.roll_deg),
            tuple(self.pitch_deg),
            tuple(self.yaw_deg),
        ]

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.intervals()])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.intervals()])

    def to_unit(self, x: Disturbance) -> np.ndarray:
        """Map a disturbance to the unit 5-cube."""
        return (x.as_array() - self.lower) / (self.upper - self.lower)

    def from_unit(self, u) -> Disturbance:
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        values = self.lower + u * (self.upper - self.lower)
        return Disturbance.from_array(np.clip(values, self.lower, self.upper))

    @classmethod
    def from_dict(cls, d: dict) -> "DisturbanceBounds":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown bounds keys: {sorted(unknown)}")
        kw = {k: (tuple(v) if isinstance(v, (list, tuple)) else float(v)) for k, v in d.items()}
        return cls(**kw)


def validate(x: Disturbance, bounds: DisturbanceBounds) -> None:
    """Raise :class:`DisturbanceError` naming the first dimension out of bounds."""
    for name, value, (lo, hi) in zip(FIELD_NAMES, astuple(x), bounds.intervals()):
        if not math.isfinite(value) or not lo <= value <= hi:
            raise DisturbanceError(name, value, lo, hi)


def normalized_offsets(x: Disturbance, bounds: DisturbanceBounds) -> np.ndarray:
    """Placement offsets scaled to [-1, 1], each side by its own bound."""
    out = np.empty(4)
    for i, (value, (lo, hi)) in enumerate(zip(x.placement(), bounds.intervals()[1:])):
        if value >= 0:
            out[i] = value / hi if hi > 0 else 0.0
        else:
            out[i] = -value / lo if lo < 0 else 0.0
    return out


def placement_deviation(x: Disturbance | None, bounds: DisturbanceBounds) -> float:
    """Euclidean norm of the normalized placement offsets, rescaled to [0, 1]."""
    if x is None:
        return 0.0
    return min(1.0, float(np.linalg.norm(normalized_offsets(x, bounds))) / 2.0)


def foreshortening(x: Disturbance | None, bounds: DisturbanceBounds) -> float:
    """Loss of apparent sign area from pitch and yaw, scaled to [0, 1] at the worst in-bounds tilt.

    This is the placement deviation the detectors see; roll and height do
    not change the projected face of the sign.
    """
    if x is None:
        return 0.0
    p_max = max(abs(bounds.pitch_deg[0]), abs(bounds.pitch_deg[1]))
    y_max = max(abs(bounds.yaw_deg[0]), abs(bounds.yaw_deg[1]))
    worst = 1.0 - math.cos(math.radians(p_max)) * math.cos(math.radians(y_max))
    if worst <= 0.0:
        return 0.0
    loss = 1.0 - math.cos(math.radians(x.pitch_deg)) * math.cos(math.radians(x.yaw_deg))
    return min(1.0, max(0.0, loss / worst))


def angular_deviation(x: Disturbance | None, bounds: DisturbanceBounds) -> float:
    """Norm of the normalized (roll, pitch, yaw) offsets, rescaled to [0, 1]."""
    if x is None:
        return 0.0
    angles = normalized_offsets(x, bounds)[1:]
    return min(1.0, float(np.linalg.norm(angles)) / math.sqrt(3.0))


def conspicuousness(x: Disturbance, bounds: DisturbanceBounds) -> float:
    """How noticeable a disturbance is, in [0, 1].

    Half the weight goes to the perturbation strength (smaller ``c`` is
    more visible), half to the placement deviation from the standard pose.
    """
    strength = 1.0 - (x.strength_c - bounds.c_min) / (bounds.c_max - bounds.c_min)
    return 0.5 * strength + 0.5 * placement_deviation(x, bounds)


def sample_uniform(bounds: DisturbanceBounds, rng: np.random.Generator) -> Disturbance:
    return Disturbance.from_array(rng.uniform(bounds.lower, bounds.upper))


def latin_hypercube(bounds: DisturbanceBounds, n: int, rng: np.random.Generator) -> list[Disturbance]:
    """Latin hypercube design: one sample per 1/n bin in every dimension."""
    if n < 1:
        raise ValueError("n must be >= 1")
    unit = qmc.LatinHypercube(d=5, seed=rng).random(n)
    return [bounds.from_unit(row) for row in unit]
