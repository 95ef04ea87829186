"""Bayesian-optimization falsification campaign and the adversary-attempts estimate."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from ..adversary import Disturbance, DisturbanceBounds, latin_hypercube
from ..perception import PerceptionConfig
from ..protection import ProtectionModel
from ..scenario import ScenarioConfig
from .objective import ObjectiveConfig, RolloutError, ScoreResult, is_counterexample, score_disturbance
from .surrogate import Surrogate, ei_at, gp_fit, posterior_joint

log = logging.getLogger(__name__)

ATTEMPTS_CAP = 1e6


@dataclass(frozen=True)
class CampaignConfig:
    bootstrap_n: int = 100
    bo_iterations: int = 150
    candidates: int = 1000
    refine_steps: int = 20
    seed: int = 0
    stop_on_counterexample: bool = True

    def __post_init__(self):
        if self.bootstrap_n < 2 or self.bo_iterations < 0:
            raise ValueError("need bootstrap_n >= 2 and bo_iterations >= 0")
        if self.candidates < 1 or self.refine_steps < 0:
            raise ValueError("need candidates >= 1 and refine_steps >= 0")


@dataclass(frozen=True)
class AttemptEstimate:
    p_hit: float
    expected_attempts: float
    method: str = "gp-posterior-samples"

    def to_dict(self) -> dict:
        return {"p_hit": self.p_hit, "expected_attempts": self.expected_attempts, "method": self.method}


@dataclass(frozen=True)
class Evaluation:
    index: int
    phase: str
    x: Disturbance
    obs_digest: str
    score: ScoreResult


@dataclass
class CampaignResult:
    evaluated: list[Evaluation]
    counterexamples: list[Evaluation]
    attempts_estimate: AttemptEstimate | None
    complete: bool = True
    error: str | None = None
    surrogate: Surrogate | None = field(default=None, repr=False)

    @property
    def best(self) -> Evaluation | None:
        if not self.evaluated:
            return None
        return max(self.evaluated, key=lambda e: e.score.effectiveness)

    @property
    def best_curve(self) -> np.ndarray:
        return np.maximum.accumulate([e.score.effectiveness for e in self.evaluated])


def propose_unit(s: Surrogate, rng: np.random.Generator, candidates: int = 1000, refine_steps: int = 20,
                 step: float = 0.05) -> tuple[np.ndarray, float, float]:
    """EI maximizer on the unit cube: best random candidate, then coordinate search.

    Returns the point, its EI and the best raw-candidate EI.
    """
    cand = rng.random((candidates, s.X.shape[1]))
    ei = ei_at(s, cand)
    k = int(np.argmax(ei))
    x = cand[k].copy()
    best_ei = float(ei[k])
    raw_best = best_ei
    dim = len(x)
    for _ in range(refine_steps):
        trial = np.repeat(x[None, :], 2 * dim, axis=0)
        for d in range(dim):
            trial[2 * d, d] += step
            trial[2 * d + 1, d] -= step
        np.clip(trial, 0.0, 1.0, out=trial)
        trial_ei = ei_at(s, trial)
        j = int(np.argmax(trial_ei))
        if trial_ei[j] > best_ei:
            x, best_ei = trial[j], float(trial_ei[j])
        else:
            step *= 0.5
    return x, best_ei, raw_best


def propose_next(s: Surrogate, bounds: DisturbanceBounds, rng: np.random.Generator, candidates: int = 1000,
                 refine_steps: int = 20) -> Disturbance:
    x, _, _ = propose_unit(s, rng, candidates, refine_steps)
    return bounds.from_unit(x)


def attempt_grid(levels: int = 5, dim: int = 5) -> np.ndarray:
    axis = np.linspace(0.0, 1.0, levels)
    return np.array(list(itertools.product(axis, repeat=dim)))


def estimate_attempts(s: Surrogate, objective: ObjectiveConfig, bounds: DisturbanceBounds | None,
                      rng: np.random.Generator, n_samples: int = 200, levels: int = 5) -> AttemptEstimate:
    """How many surrogate-guided tries until the adversary hits a counterexample.

    Joint GP posterior samples on a ``levels**5`` grid; a sample "hits" when
    its maximum clears the counterexample effectiveness bar ``1 - epsilon``.
    """
    grid = attempt_grid(levels, s.X.shape[1])
    mu, cov = posterior_joint(s, grid)
    L = _robust_cholesky(cov, s.signal_var)
    z = rng.standard_normal((len(grid), n_samples))
    samples = mu[:, None] + L @ z
    p_hit = float(np.mean(samples.max(axis=0) > 1.0 - objective.epsilon))
    attempts = min(ATTEMPTS_CAP, 1.0 / max(p_hit, 1e-6))
    return AttemptEstimate(p_hit, attempts)


def attempts_from_p_hit(p_hit: float) -> float:
    return min(ATTEMPTS_CAP, 1.0 / max(p_hit, 1e-6))


def _robust_cholesky(cov: np.ndarray, scale: float) -> np.ndarray:
    n = len(cov)
    jitter = 1e-10 * scale
    for _ in range(10):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    # posterior covariance is PSD up to round-off; fall back to the eigen square root
    w, V = np.linalg.eigh(cov)
    return V * np.sqrt(np.clip(w, 0.0, None))


def run_campaign(
    campaign: CampaignConfig,
    objective: ObjectiveConfig,
    protection: ProtectionModel,
    scenario: ScenarioConfig,
    bounds: DisturbanceBounds,
    *,
    perception: PerceptionConfig = PerceptionConfig(),
    estimate: bool = True,
) -> CampaignResult:
    """Latin-hypercube bootstrap, then GP/EI rounds of fit, propose, score."""
    rng = np.random.default_rng(np.random.SeedSequence([campaign.seed, 0xCA]))
    evaluated: list[Evaluation] = []
    found: list[Evaluation] = []

    def evaluate(x: Disturbance, phase: str) -> bool:
        idx = len(evaluated)
        score = score_disturbance(x, protection, scenario, objective, seed=campaign.seed * 100_003 + idx,
                                  perception=perception, bounds=bounds)
        e = Evaluation(idx, phase, x, score.obs_digest, score)
        evaluated.append(e)
        if is_counterexample(score, objective):
            found.append(e)
            return campaign.stop_on_counterexample
        return False

    def fit() -> Surrogate:
        X = np.array([bounds.to_unit(e.x) for e in evaluated]).clip(0.0, 1.0)
        y = np.array([e.score.effectiveness for e in evaluated])
        return gp_fit(X, y)

    surrogate = None
    try:
        stop = False
        for x in latin_hypercube(bounds, campaign.bootstrap_n, rng):
            if evaluate(x, "bootstrap"):
                stop = True
                break
        it = 0
        while not stop and it < campaign.bo_iterations:
            surrogate = fit()
            x = propose_next(surrogate, bounds, rng, campaign.candidates, campaign.refine_steps)
            stop = evaluate(x, "bo")
            it += 1
    except RolloutError as exc:
        log.error("campaign aborted after %d evaluations: %s", len(evaluated), exc)
        return CampaignResult(evaluated, found, None, complete=False, error=str(exc))

    attempts = None
    if estimate and len(evaluated) >= 2:
        surrogate = fit()
        attempts = estimate_attempts(surrogate, objective, bounds, rng)
    return CampaignResult(evaluated, found, attempts, surrogate=surrogate)
