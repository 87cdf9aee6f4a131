"""Gronwall-type bounds used as executable oracles."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import DomainError, HypothesisError
from .measures import MixedMeasure

__all__ = ["StepFunction", "discrete_bound", "measure_bound", "sqrt_bound", "step_integral"]


@dataclass(frozen=True, eq=False)
class StepFunction:
    """``g(t) = values[k]`` on ``[breaks[k], breaks[k+1])``; the last value holds to the end."""

    breaks: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.ndim != 1 or b.shape != v.shape or b[0] != 0.0 or np.any(np.diff(b) <= 0):
            raise DomainError("step function needs increasing breaks starting at 0, one value each")
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value):
        return cls([0.0], [value])

    def __call__(self, t):
        k = np.searchsorted(self.breaks, t, side="right") - 1
        return self.values[np.clip(k, 0, len(self.values) - 1)]


def _nonneg(name, *xs):
    for x in xs:
        if np.any(np.asarray(x) < 0):
            raise DomainError(f"{name} must be nonnegative")


def discrete_bound(a0, alphas, betas, gammas, j):
    """``(a0 + sum_{k<j} alpha_k) exp(sum_{k<j} (k beta_k + gamma_k))``.

    Valid for nonnegative sequences with
    ``a_{i+1} <= alpha_i + beta_i (a_0 + ... + a_{i-1}) + (1 + gamma_i) a_i``.
    """
    if j < 1:
        raise DomainError("j must be at least 1")
    alphas, betas, gammas = (np.asarray(x, dtype=float)[:j] for x in (alphas, betas, gammas))
    _nonneg("inputs", a0, alphas, betas, gammas)
    k = np.arange(len(betas))
    return (a0 + alphas.sum()) * math.exp(float(np.sum(k * betas + gammas)))


def step_integral(g: StepFunction, measure: MixedMeasure, t):
    """``int_{]0, t]} g d(lambda + dr)`` exactly (``g`` a step function)."""
    r = measure.variation
    if not 0 <= t <= measure.horizon:
        raise DomainError("time outside the horizon")
    cuts = np.unique(np.concatenate(([0.0, t], g.breaks[g.breaks < t], r.knots[r.knots[:, 0] < t, 0])))
    lo, hi = cuts[:-1], cuts[1:]
    vals = g(lo)
    smooth = np.sum(vals * ((hi - lo) + r.continuous(hi) - r.continuous(lo)))
    atoms = r.atoms[r.atoms[:, 0] <= t] if len(r.atoms) else np.zeros((0, 2))
    return float(smooth + np.sum(g(atoms[:, 0]) * atoms[:, 1]))


def measure_bound(alpha, g: StepFunction, measure: MixedMeasure, beta, t):
    """``alpha exp(int_{]0,t]} g dmu / (1 - beta))``; checks ``mu({s}) g(s) <= beta < 1``."""
    _nonneg("alpha, g and beta", alpha, g.values, beta)
    if beta >= 1:
        raise HypothesisError("beta must be < 1")
    r = measure.variation
    for tau, jump in r.atoms.tolist():
        if jump * float(g(tau)) > beta:
            raise HypothesisError(f"atom at {tau}: mu({{t}}) g(t) = {jump * float(g(tau))} exceeds beta = {beta}")
    return alpha * math.exp(step_integral(g, measure, t) / (1 - beta))


def sqrt_bound(a, m, t):
    """``a + int_0^t m``; ``m`` is a :class:`StepFunction` or a callable."""
    if a < 0:
        raise DomainError("a must be nonnegative")
    if isinstance(m, StepFunction):
        _nonneg("m", m.values)
        cuts = np.unique(np.concatenate(([0.0, t], m.breaks[m.breaks < t])))
        return a + float(np.sum(m(cuts[:-1]) * np.diff(cuts)))
    from scipy.integrate import quad

    val, _ = quad(m, 0.0, t, limit=200)
    return a + val
