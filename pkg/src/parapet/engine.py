"""A small trace-based generative-program engine.

A *model* is a plain function ``model(params, choose)``. Every random choice
goes through ``choose(address, distribution)``, which returns the value and
records it in the trace. Nothing else in the model may be random.

Importance sampling runs all particles in a single execution: ``choose``
hands back arrays of shape ``(n,)`` and distributions broadcast. Models
written with numpy operations (and :class:`IfElse` instead of Python
branches on random values) therefore work both for single traces and for
particle batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy.special import betaln, gammaln, logsumexp, xlog1py, xlogy


class EngineError(Exception):
    pass


class DuplicateAddressError(EngineError):
    pass


class UnknownObservationError(EngineError):
    pass


class ImpossibleEvidenceError(EngineError):
    """Every particle gave the observations zero likelihood."""


def _check(cond, message):
    if not np.all(cond):
        raise ValueError(message)


class Distribution:
    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def log_pdf(self, value):
        raise NotImplementedError


@dataclass(frozen=True)
class Bernoulli(Distribution):
    p: Any

    def __post_init__(self):
        _check((np.asarray(self.p) >= 0) & (np.asarray(self.p) <= 1), f"Bernoulli p={self.p} not in [0, 1]")

    def sample(self, rng, size=None):
        out = rng.random(size) < self.p
        return bool(out) if size is None else out

    def log_pdf(self, value):
        v = np.asarray(value)
        with np.errstate(divide="ignore"):
            lp = np.where(v.astype(bool), np.log(self.p), np.log1p(-np.asarray(self.p, dtype=float)))
        valid = (v == 0) | (v == 1)
        return _scalar(np.where(valid, lp, -np.inf))


@dataclass(frozen=True)
class Uniform(Distribution):
    lo: Any = 0.0
    hi: Any = 1.0

    def __post_init__(self):
        _check(np.asarray(self.lo) < np.asarray(self.hi), f"Uniform needs lo < hi, got [{self.lo}, {self.hi}]")

    def sample(self, rng, size=None):
        return rng.uniform(self.lo, self.hi, size)

    def log_pdf(self, value):
        v = np.asarray(value, dtype=float)
        inside = (v >= self.lo) & (v <= self.hi)
        return _scalar(np.where(inside, -np.log(np.asarray(self.hi) - self.lo), -np.inf))


@dataclass(frozen=True)
class Beta(Distribution):
    alpha: Any
    beta: Any

    def __post_init__(self):
        _check((np.asarray(self.alpha) > 0) & (np.asarray(self.beta) > 0), "Beta shapes must be positive")

    def sample(self, rng, size=None):
        return rng.beta(self.alpha, self.beta, size)

    def log_pdf(self, value):
        v = np.asarray(value, dtype=float)
        inside = (v >= 0) & (v <= 1)
        vc = np.clip(v, 0.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = xlogy(self.alpha - 1.0, vc) + xlog1py(self.beta - 1.0, -vc) - betaln(self.alpha, self.beta)
        return _scalar(np.where(inside, lp, -np.inf))


@dataclass(frozen=True)
class Poisson(Distribution):
    rate: Any

    def __post_init__(self):
        _check(np.asarray(self.rate) > 0, f"Poisson rate must be positive, got {self.rate}")

    def sample(self, rng, size=None):
        out = rng.poisson(self.rate, size)
        return int(out) if size is None else out

    def log_pdf(self, value):
        k = np.asarray(value, dtype=float)
        valid = (k >= 0) & (k == np.floor(k))
        kc = np.where(valid, k, 0.0)
        lp = xlogy(kc, self.rate) - self.rate - gammaln(kc + 1.0)
        return _scalar(np.where(valid, lp, -np.inf))


@dataclass(frozen=True)
class Gaussian(Distribution):
    mu: Any
    sigma: Any

    def __post_init__(self):
        _check(np.asarray(self.sigma) > 0, f"Gaussian sigma must be positive, got {self.sigma}")

    def sample(self, rng, size=None):
        return rng.normal(self.mu, self.sigma, size)

    def log_pdf(self, value):
        z = (np.asarray(value, dtype=float) - self.mu) / self.sigma
        return _scalar(-0.5 * z * z - np.log(self.sigma) - 0.5 * math.log(2 * math.pi))


@dataclass(frozen=True)
class Categorical(Distribution):
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        _check((w.ndim == 1) & (w.size > 0), "Categorical needs a 1-d weight vector")
        _check(w >= 0, "Categorical weights must be nonnegative")
        _check(w.sum() > 0, "Categorical weights must not all be zero")
        object.__setattr__(self, "weights", tuple(w))

    @property
    def probs(self) -> np.ndarray:
        w = np.asarray(self.weights)
        return w / w.sum()

    def sample(self, rng, size=None):
        out = rng.choice(len(self.weights), size=size, p=self.probs)
        return int(out) if size is None else out

    def log_pdf(self, value):
        k = np.asarray(value)
        n = len(self.weights)
        valid = (k >= 0) & (k < n) & (k == np.floor(k))
        with np.errstate(divide="ignore"):
            logp = np.log(self.probs)
        lp = logp[np.where(valid, k, 0).astype(int)]
        return _scalar(np.where(valid, lp, -np.inf))


@dataclass(frozen=True)
class IfElse(Distribution):
    """Pick between two distributions elementwise on a (possibly batched) flag."""

    cond: Any
    if_true: Distribution
    if_false: Distribution

    def sample(self, rng, size=None):
        a = self.if_true.sample(rng, size)
        b = self.if_false.sample(rng, size)
        out = np.where(self.cond, a, b)
        return out.item() if size is None else out

    def log_pdf(self, value):
        return _scalar(np.where(self.cond, self.if_true.log_pdf(value), self.if_false.log_pdf(value)))


def _scalar(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def log_pdf(dist: Distribution, value) -> float:
    """Exact log density (or mass) of ``value``; ``-inf`` outside the support."""
    return dist.log_pdf(value)


@dataclass
class Trace:
    """One program execution: addressed choices and a log-weight."""

    choices: dict[str, Any] = field(default_factory=dict)
    log_weight: float = 0.0

    def __getitem__(self, address: str):
        return self.choices[address]

    def __contains__(self, address: str) -> bool:
        return address in self.choices


Model = Callable[[Any, Callable[[str, Distribution], Any]], Any]


class _Recorder:
    def __init__(self, rng, size, observations):
        self.rng = rng
        self.size = size
        self.observations = observations
        self.choices: dict[str, Any] = {}
        self.log_weight = 0.0

    def __call__(self, address: str, dist: Distribution):
        if address in self.choices:
            raise DuplicateAddressError(f"address {address!r} chosen twice in one execution")
        if address in self.observations:
            value = self.observations[address]
            self.log_weight = self.log_weight + dist.log_pdf(value)
        else:
            value = dist.sample(self.rng, self.size)
        self.choices[address] = value
        return value


def simulate(model: Model, params, rng: np.random.Generator) -> Trace:
    """Run ``model`` forward, drawing every choice from its prior."""
    rec = _Recorder(rng, None, {})
    model(params, rec)
    return Trace(rec.choices, 0.0)


@dataclass
class PosteriorEstimate:
    """Weighted particle approximation of a posterior.

    ``choices`` maps each address to an array with one entry per particle
    (observed addresses hold the observed value).
    """

    choices: dict[str, Any]
    log_weights: np.ndarray
    normalized_weights: np.ndarray
    effective_sample_size: float

    @property
    def n(self) -> int:
        return len(self.log_weights)

    def particle(self, i: int) -> Trace:
        ch = {}
        for addr, v in self.choices.items():
            v = np.asarray(v)
            ch[addr] = v[i].item() if v.ndim else v.item()
        return Trace(ch, float(self.log_weights[i]))

    @property
    def traces(self) -> list[Trace]:
        return [self.particle(i) for i in range(self.n)]

    def mean(self, address: str) -> float:
        v = np.broadcast_to(np.asarray(self.choices[address], dtype=float), (self.n,))
        return float(np.dot(self.normalized_weights, v))


def importance_posterior(
    model: Model,
    params,
    observations: Mapping[str, Any],
    n: int,
    rng: np.random.Generator,
) -> PosteriorEstimate:
    """Likelihood-weighted importance sampling with the prior as proposal."""
    if n < 1:
        raise ValueError("need at least one particle")
    rec = _Recorder(rng, n, dict(observations))
    model(params, rec)
    missing = set(observations) - set(rec.choices)
    if missing:
        raise UnknownObservationError(f"observed addresses not in model: {sorted(missing)}")
    log_w = np.broadcast_to(np.asarray(rec.log_weight, dtype=float), (n,)).copy()
    if not np.any(np.isfinite(log_w)):
        raise ImpossibleEvidenceError("observations have zero likelihood under every particle")
    w = np.exp(log_w - logsumexp(log_w))
    w /= w.sum()
    ess = 1.0 / float(np.sum(w * w))
    return PosteriorEstimate(rec.choices, log_w, w, ess)


def query(post: PosteriorEstimate, predicate: Callable[[Mapping[str, Any]], Any], vectorized: bool = True) -> float:
    """Posterior probability that ``predicate`` holds.

    With ``vectorized=True`` the predicate receives the batched choice map
    and may return a scalar or one flag per particle.
    """
    if post.n == 0:
        raise ValueError("empty posterior")
    if vectorized:
        hits = np.broadcast_to(np.asarray(predicate(post.choices), dtype=bool), (post.n,))
    else:
        hits = np.array([bool(predicate(t.choices)) for t in post.traces])
    return float(min(1.0, np.dot(post.normalized_weights, hits)))
