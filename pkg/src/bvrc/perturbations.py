"""State-dependent forcing: Lipschitz drifts and set-valued drifts via selections.

All forcings are drifts (see :mod:`bvrc.catching_up`).  The state enters
explicitly: on the cell ``]t_i, t_{i+1}]`` the drift integral is
``f(t_i, u_i) * eta_{i+1}`` while the operator stays implicit.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Callable

import numpy as np

from .catching_up import march, solve_levels, MAX_LEVELS
from .errors import HypothesisError, SelectionError
from .measures import MixedMeasure, lambda_density
from .monotone import Ball, Box, MEMBERSHIP_TOL

__all__ = [
    "LipschitzForcing",
    "SetValuedForcing",
    "constant_forcing",
    "linear_forcing",
    "box_forcing",
    "ball_forcing",
    "solve_lipschitz",
    "solve_set_valued",
    "solve_mixed",
    "atom_condition",
    "growth_bound",
]


def _vec(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class LipschitzForcing:
    """``f(t, x)`` with ``|f(t,x)| <= M (1 + |x|)`` and Lipschitz modulus ``M`` in ``x``."""

    rule: Callable
    bound: float
    name: str = "user"

    def __call__(self, t, x):
        return _vec(self.rule(t, _vec(x)))

    def spot_check(self, dim, horizon, samples=200, scale=10.0, seed=0):
        """Check the growth and Lipschitz claims on random samples; raise ``HypothesisError``."""
        rng = np.random.default_rng(seed)
        M = self.bound
        for _ in range(samples):
            t = rng.uniform(0, horizon)
            x, y = rng.uniform(-scale, scale, (2, dim))
            fx, fy = self(t, x), self(t, y)
            if np.linalg.norm(fx) > M * (1 + np.linalg.norm(x)) + 1e-9:
                raise HypothesisError(f"growth bound fails at t={t}, x={x}")
            if np.linalg.norm(fx - fy) > M * np.linalg.norm(x - y) + 1e-9:
                raise HypothesisError(f"Lipschitz bound fails at t={t}")


def constant_forcing(value):
    v = _vec(value)
    return LipschitzForcing(lambda t, x: v, float(np.linalg.norm(v)), "constant")


def linear_forcing(a, b):
    """``f(t, x) = a x + b`` (scalar ``a``)."""
    bv = _vec(b)
    return LipschitzForcing(lambda t, x: a * x + bv, max(abs(a), float(np.linalg.norm(bv))), "linear")


@dataclass(frozen=True)
class SetValuedForcing:
    """``F(t, x)`` given as a convex body, with a selection rule.

    The default selection is the least-norm element (projection of the
    origin).  ``bound`` is the growth constant ``M`` of the values.
    """

    values_at: Callable
    selection: Callable | None = None
    bound: float = math.inf
    name: str = "min-norm"

    def body(self, t, x):
        return self.values_at(t, _vec(x))

    def select(self, t, x):
        body = self.body(t, x)
        if self.selection is None:
            return body.project(np.zeros(body.dim))
        return _vec(self.selection(t, _vec(x)))

    def contains(self, t, x, v, tol=MEMBERSHIP_TOL):
        return self.body(t, x).contains(v, tol)


def box_forcing(lower, upper, selection=None):
    lo, hi = _vec(lower), _vec(upper)
    box = Box(lo, hi)
    bound = float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))
    return SetValuedForcing(lambda t, x: box, selection, bound, "min-norm" if selection is None else "user")


def ball_forcing(radius, center=None, dim=1, selection=None):
    c = np.zeros(dim) if center is None else _vec(center)
    ball = Ball(c, radius)
    return SetValuedForcing(lambda t, x: ball, selection, float(np.linalg.norm(c)) + radius,
                            "min-norm" if selection is None else "user")


def atom_condition(measure: MixedMeasure, bound):
    """``max_t 2 M (dlambda/dnu)(t) nu({t})`` over the atoms; must be < 1."""
    beta = 0.0
    for tau, jump in measure.variation.atoms.tolist():
        beta = max(beta, 2 * bound * lambda_density(measure, tau) * jump)
    if beta >= 1:
        raise HypothesisError(f"atom condition fails: {beta} >= 1")
    return beta


def growth_bound(bound, alpha0, t):
    """Solution of ``alpha' = M (1 + alpha)``, ``alpha(0) = alpha0``."""
    return (alpha0 + 1.0) * math.exp(bound * t) - 1.0


def _explicit(rule):
    def forcing(t_prev, t_next, u_prev):
        return rule(t_prev, u_prev) * (t_next - t_prev)

    return forcing


def _selection_rule(F: SetValuedForcing):
    def rule(t, x):
        v = F.select(t, x)
        if not F.contains(t, x, v):
            raise SelectionError(f"selected value {v.tolist()} is outside F(t={t}, x={x.tolist()})")
        return v

    return rule


def _solve(family, rule, u0, measure, tol, eps0, factor, max_levels, info):
    forcing = None if rule is None else _explicit(rule)
    report = solve_levels(lambda P: march(family, P, u0, forcing), measure, tol, eps0, factor, max_levels)
    report.info.update(info)
    return report


def solve_lipschitz(family, forcing: LipschitzForcing, u0, measure: MixedMeasure, tol=1e-6, eps0=1e-2,
                    factor=0.5, max_levels=MAX_LEVELS):
    """Unique solution with a Lipschitz drift ``forcing(t, x)``."""
    beta = atom_condition(measure, forcing.bound)
    return _solve(family, forcing, u0, measure, tol, eps0, factor, max_levels,
                  {"atom_condition": beta, "forcing": forcing.name})


def solve_set_valued(family, F: SetValuedForcing, u0, measure: MixedMeasure, tol=1e-6, eps0=1e-2,
                     factor=0.5, max_levels=MAX_LEVELS):
    """Solution driven by the selection of ``F``; every selected value is checked."""
    return _solve(family, _selection_rule(F), u0, measure, tol, eps0, factor, max_levels,
                  {"selection": F.name})


def solve_mixed(family, f: LipschitzForcing | None, F: SetValuedForcing | None, u0, measure: MixedMeasure,
                tol=1e-6, eps0=1e-2, factor=0.5, max_levels=MAX_LEVELS):
    """Drift ``f(t, x) + selection of F(t, x)``."""
    parts = []
    info = {}
    if f is not None:
        info["atom_condition"] = atom_condition(measure, f.bound)
        info["forcing"] = f.name
        parts.append(f)
    if F is not None:
        info["selection"] = F.name
        parts.append(_selection_rule(F))
    if not parts:
        rule = None
    else:
        def rule(t, x):
            return sum(p(t, x) for p in parts)
    if f is None and F is None:
        info["forcing"] = "none"
    return _solve(family, rule, u0, measure, tol, eps0, factor, max_levels, info)
