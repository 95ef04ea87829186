"""Gaussian-process surrogate over the unit disturbance cube, and expected improvement."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import ndtr

JITTER = 1e-8

DEFAULT_GRID = {
    "lengthscale": (0.1, 0.2, 0.5, 1.0),
    "signal_var": (0.25, 1.0),
    "noise_var": (1e-4, 1e-2),
}


def sq_exp_kernel(a: np.ndarray, b: np.ndarray, lengthscale: float, signal_var: float) -> np.ndarray:
    d2 = np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2.0 * a @ b.T
    np.maximum(d2, 0.0, out=d2)
    return signal_var * np.exp(-0.5 * d2 / (lengthscale * lengthscale))


@dataclass
class Surrogate:
    X: np.ndarray
    y: np.ndarray
    mean: float
    lengthscale: float
    signal_var: float
    noise_var: float
    chol: tuple
    alpha: np.ndarray
    log_marginal_likelihood: float

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def incumbent(self) -> float:
        return float(np.max(self.y))


def _condition(X, y, lengthscale, signal_var, noise_var):
    n = len(y)
    mean = float(np.mean(y))
    K = sq_exp_kernel(X, X, lengthscale, signal_var)
    K[np.diag_indices(n)] += noise_var + JITTER
    c = cho_factor(K, lower=True)
    resid = y - mean
    alpha = cho_solve(c, resid)
    lml = -0.5 * float(resid @ alpha) - float(np.sum(np.log(np.diag(c[0])))) - 0.5 * n * math.log(2 * math.pi)
    return Surrogate(X, y, mean, lengthscale, signal_var, noise_var, c, alpha, lml)


def gp_fit(X, y, grid: dict | None = None) -> Surrogate:
    """Fit by exhaustive log-marginal-likelihood search over a fixed grid.

    A constant mean equal to the target average is subtracted first. The
    noise variance keeps repeated inputs well conditioned.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(y) < 2 or X.shape[0] != len(y):
        raise ValueError("gp_fit needs at least two (input, target) pairs")
    if np.any(X < -1e-12) or np.any(X > 1 + 1e-12):
        raise ValueError("inputs must be normalized to the unit cube")
    grid = grid or DEFAULT_GRID
    best = None
    for ls, sv, nv in itertools.product(grid["lengthscale"], grid["signal_var"], grid["noise_var"]):
        s = _condition(X, y, ls, sv, nv)
        if best is None or s.log_marginal_likelihood > best.log_marginal_likelihood:
            best = s
    return best


def grid_log_marginal_likelihoods(X, y, grid: dict | None = None) -> dict:
    grid = grid or DEFAULT_GRID
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    return {
        combo: _condition(X, y, *combo).log_marginal_likelihood
        for combo in itertools.product(grid["lengthscale"], grid["signal_var"], grid["noise_var"])
    }


def gp_predict(s: Surrogate, x) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and latent-function variance at one or more points."""
    Xs = np.atleast_2d(np.asarray(x, dtype=float))
    Ks = sq_exp_kernel(s.X, Xs, s.lengthscale, s.signal_var)
    mu = s.mean + Ks.T @ s.alpha
    v = solve_triangular(s.chol[0], Ks, lower=True)
    var = s.signal_var - np.sum(v * v, 0)
    return mu, np.maximum(var, 0.0)


def posterior_joint(s: Surrogate, Xs) -> tuple[np.ndarray, np.ndarray]:
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    Ks = sq_exp_kernel(s.X, Xs, s.lengthscale, s.signal_var)
    mu = s.mean + Ks.T @ s.alpha
    v = solve_triangular(s.chol[0], Ks, lower=True)
    cov = sq_exp_kernel(Xs, Xs, s.lengthscale, s.signal_var) - v.T @ v
    return mu, cov


def expected_improvement(mu, sigma, best) -> np.ndarray:
    """EI for maximization: ``(mu - b) Phi(z) + sigma phi(z)``."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    diff = mu - best
    safe = np.where(sigma > 0, sigma, 1.0)
    with np.errstate(over="ignore"):
        # a vanishing sigma sends z*z to inf, where phi(z) is 0 anyway
        z = diff / safe
        ei = diff * ndtr(z) + safe * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    out = np.where(sigma > 0, ei, np.maximum(diff, 0.0))
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def ei_at(s: Surrogate, x, incumbent: float | None = None):
    mu, var = gp_predict(s, x)
    return expected_improvement(mu, np.sqrt(var), s.incumbent if incumbent is None else incumbent)
