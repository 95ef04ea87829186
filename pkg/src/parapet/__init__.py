"""Simulation-based falsification of protections against physical perception attacks."""

__version__ = "0.1.0"

from .adversary import Disturbance, DisturbanceBounds, conspicuousness
from .kernels import BACKEND
from .perception import CorrelationPrior, PerceptionConfig, calibrate_priors
from .protection import SensorFusionConfig, SensorFusionProtection, TrivialProtection
from .scenario import ScenarioConfig, run_scenario

__all__ = [
    "BACKEND",
    "CorrelationPrior",
    "Disturbance",
    "DisturbanceBounds",
    "PerceptionConfig",
    "ScenarioConfig",
    "SensorFusionConfig",
    "SensorFusionProtection",
    "TrivialProtection",
    "__version__",
    "calibrate_priors",
    "conspicuousness",
    "run_scenario",
]
