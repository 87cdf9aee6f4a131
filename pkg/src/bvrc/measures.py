"""Variation functions, the mixed measure nu = lambda + dr and adapted partitions.

A variation function is ``r(t) = c(t) + sum(jump_k for tau_k <= t)`` where ``c``
is a nondecreasing piecewise-linear function through user knots and the atoms
``(tau_k, jump_k)`` are finitely many.  Everything here is exact up to floating
point: no quadrature is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DomainError

__all__ = [
    "VariationFunction",
    "MixedMeasure",
    "AdaptedPartition",
    "nu_mass",
    "lambda_density",
    "build_partition",
    "refine",
]

# relative slack used when checking the epsilon bound of a cell
_EPS_SLACK = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class VariationFunction:
    """Nondecreasing right-continuous ``r`` with ``r(0) = 0`` on ``[0, T]``.

    Parameters
    ----------
    horizon : float
        Final time ``T > 0``.
    knots : sequence of (time, value)
        Knots of the continuous part. The first must be ``(0, 0)`` and the
        last must sit at ``T``. Defaults to the zero function.
    atoms : sequence of (location, jump)
        Jump locations in ``(0, T]`` (strictly increasing) with positive jumps.
    """

    horizon: float
    knots: np.ndarray = None
    atoms: np.ndarray = None

    def __post_init__(self):
        T = float(self.horizon)
        if not (T > 0 and math.isfinite(T)):
            raise DomainError(f"horizon must be a finite positive number, got {self.horizon}")
        knots = [(0.0, 0.0), (T, 0.0)] if self.knots is None else self.knots
        knots = np.array(knots, dtype=float).reshape(-1, 2)
        atoms = np.zeros((0, 2)) if self.atoms is None else np.array(self.atoms, dtype=float).reshape(-1, 2)
        if len(knots) < 2:
            raise DomainError("at least two knots are required")
        if knots[0, 0] != 0.0 or knots[0, 1] != 0.0:
            raise DomainError("first knot must be (0, 0)")
        if knots[-1, 0] != T:
            raise DomainError(f"last knot must sit at the horizon {T}, got {knots[-1, 0]}")
        if np.any(np.diff(knots[:, 0]) <= 0):
            raise DomainError("knot times must be strictly increasing")
        if np.any(np.diff(knots[:, 1]) < 0):
            raise DomainError("knot values must be nondecreasing")
        if not np.all(np.isfinite(knots)) or not np.all(np.isfinite(atoms)):
            raise DomainError("knots and atoms must be finite")
        if len(atoms):
            if np.any(atoms[:, 0] <= 0) or np.any(atoms[:, 0] > T):
                raise DomainError("atom locations must lie in (0, T]")
            if np.any(np.diff(atoms[:, 0]) <= 0):
                raise DomainError("atom locations must be strictly increasing")
            if np.any(atoms[:, 1] <= 0):
                raise DomainError("atom jumps must be positive")
        object.__setattr__(self, "horizon", T)
        object.__setattr__(self, "knots", _frozen(knots))
        object.__setattr__(self, "atoms", _frozen(atoms))
        clock = knots[:, 0] + knots[:, 1]
        object.__setattr__(self, "_clock_knots", _frozen(clock))
        object.__setattr__(self, "_cum_jumps", _frozen(np.cumsum(atoms[:, 1])))

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls, horizon):
        return cls(horizon)

    @classmethod
    def linear(cls, horizon, slope=1.0, atoms=None):
        return cls(horizon, [(0.0, 0.0), (horizon, slope * horizon)], atoms)

    def plus_linear(self, slope):
        """Return ``r(t) + slope * t`` (used for the state-dependent measure)."""
        if slope < 0:
            raise DomainError("slope must be nonnegative")
        k = np.array(self.knots)
        k[:, 1] += slope * k[:, 0]
        return VariationFunction(self.horizon, k, self.atoms)

    # -- evaluation --------------------------------------------------------
    def continuous(self, t):
        return np.interp(t, self.knots[:, 0], self.knots[:, 1])

    def jumps_upto(self, t):
        """Sum of the jumps located in ``(0, t]``."""
        if not len(self.atoms):
            return np.zeros_like(np.asarray(t, dtype=float))
        idx = np.searchsorted(self.atoms[:, 0], t, side="right")
        cum = np.concatenate(([0.0], self._cum_jumps))
        return cum[idx]

    def __call__(self, t):
        return self.continuous(t) + self.jumps_upto(t)

    def jump_at(self, t):
        if not len(self.atoms):
            return 0.0
        i = np.searchsorted(self.atoms[:, 0], t)
        if i < len(self.atoms) and self.atoms[i, 0] == t:
            return float(self.atoms[i, 1])
        return 0.0

    def slope_at(self, t):
        """Right slope of the continuous part."""
        kt = self.knots[:, 0]
        i = int(np.searchsorted(kt, t, side="right")) - 1
        i = min(max(i, 0), len(kt) - 2)
        return float((self.knots[i + 1, 1] - self.knots[i, 1]) / (kt[i + 1] - kt[i]))

    def clock(self, t):
        """``t + c(t)``: the atom-free part of ``nu(]0, t])``."""
        return np.asarray(t, dtype=float) + self.continuous(t)

    def inverse_clock(self, g):
        return np.interp(g, self._clock_knots, self.knots[:, 0])

    @property
    def atom_locations(self):
        return self.atoms[:, 0]

    @property
    def total(self):
        return float(self(self.horizon))

    # -- text form ---------------------------------------------------------
    def to_text(self):
        lines = [f"knot {t!r} {v!r}" for t, v in self.knots.tolist()]
        lines += [f"atom {t!r} {j!r}" for t, j in self.atoms.tolist()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        knots, atoms = [], []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] not in ("knot", "atom") or len(parts) != 3:
                raise DomainError(f"line {lineno}: expected 'knot <t> <value>' or 'atom <t> <jump>'")
            try:
                pair = (float(parts[1]), float(parts[2]))
            except ValueError:
                raise DomainError(f"line {lineno}: not a decimal number") from None
            (knots if parts[0] == "knot" else atoms).append(pair)
        if not knots:
            raise DomainError("no knot lines found")
        return cls(knots[-1][0], knots, atoms or None)

    def __eq__(self, other):
        if not isinstance(other, VariationFunction):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.knots, other.knots)
            and np.array_equal(self.atoms, other.atoms)
        )

    def __hash__(self):
        return hash((self.horizon, self.knots.tobytes(), self.atoms.tobytes()))


@dataclass(frozen=True)
class MixedMeasure:
    """``nu = lambda + dr`` on ``[0, T]``."""

    variation: VariationFunction

    @property
    def horizon(self):
        return self.variation.horizon

    @property
    def total(self):
        return self.horizon + self.variation.total

    def atom_mass(self, t):
        return self.variation.jump_at(t)


def _check_range(measure, *ts):
    T = measure.horizon
    for t in ts:
        t = np.asarray(t)
        if np.any(t < -1e-12 * T) or np.any(t > T * (1 + 1e-12)):
            raise DomainError(f"time outside [0, {T}]")


def nu_mass(measure, s, t):
    """``nu(]s, t]) = (t - s) + r(t) - r(s)``; vectorised over ``s``/``t``."""
    _check_range(measure, s, t)
    if np.any(np.asarray(s) > np.asarray(t)):
        raise DomainError("nu_mass requires s <= t")
    r = measure.variation
    out = (np.asarray(t, dtype=float) - s) + r(t) - r(s)
    return float(out) if np.ndim(out) == 0 else out


def lambda_density(measure, t):
    """Density of Lebesgue measure with respect to ``nu`` at ``t``."""
    _check_range(measure, t)
    r = measure.variation
    if r.jump_at(t) > 0:
        return 0.0
    return 1.0 / (1.0 + r.slope_at(t))


@dataclass(frozen=True, eq=False)
class AdaptedPartition:
    """Nodes ``0 = t_0 < ... < t_k = T`` with per-cell masses.

    ``etas[i]``, ``deltas[i]`` and ``betas[i]`` describe the cell
    ``]nodes[i], nodes[i+1]]``; ``atom_mask[j]`` flags nodes that carry an
    atom of ``r``.
    """

    measure: MixedMeasure
    epsilon: float
    nodes: np.ndarray
    etas: np.ndarray = field(repr=False)
    deltas: np.ndarray = field(repr=False)
    betas: np.ndarray = field(repr=False)
    continuous_masses: np.ndarray = field(repr=False)
    atom_mask: np.ndarray = field(repr=False)

    @classmethod
    def from_nodes(cls, measure, nodes, epsilon):
        nodes = np.asarray(nodes, dtype=float)
        r = measure.variation
        etas = np.diff(nodes)
        cont = np.diff(r.continuous(nodes))
        jumps = np.array([r.jump_at(t) for t in nodes[1:]]) if len(r.atoms) else np.zeros(len(etas))
        deltas = cont + jumps
        mask = np.concatenate(([False], jumps > 0))
        mask.setflags(write=False)
        return cls(measure, float(epsilon), _frozen(nodes), _frozen(etas), _frozen(deltas),
                   _frozen(etas + deltas), _frozen(cont), mask)

    @property
    def n_cells(self):
        return len(self.etas)

    def cell_of(self, t):
        """Index ``i`` with ``t in [nodes[i], nodes[i+1])`` (last cell closed)."""
        i = np.searchsorted(self.nodes, t, side="right") - 1
        return np.clip(i, 0, self.n_cells - 1)

    def check(self):
        """Raise ``AssertionError`` if an invariant fails."""
        assert self.nodes[0] == 0.0 and self.nodes[-1] == self.measure.horizon
        assert np.all(self.etas > 0)
        for tau in self.measure.variation.atom_locations:
            assert np.any(self.nodes == tau), f"atom {tau} is not a node"
        assert np.all(self.etas + self.continuous_masses <= self.epsilon * (1 + _EPS_SLACK))
        assert np.allclose(self.betas, self.etas + self.deltas, rtol=0, atol=1e-12)


def _subdivide(r, left, right, eps):
    """Greedy split of each ``[left_i, right_i]`` into clock-lengths ``eps``.

    Returns the interior nodes (sorted, excluding both ends).
    """
    g0 = r.clock(left)
    glen = r.clock(right) - g0
    counts = np.maximum(1, np.ceil(glen / eps - 1e-9)).astype(int)
    inner = counts - 1
    if inner.sum() == 0:
        return np.zeros(0)
    owner = np.repeat(np.arange(len(left)), inner)
    starts = np.cumsum(inner) - inner
    k = np.arange(inner.sum()) - np.repeat(starts, inner) + 1
    g = g0[owner] + k * eps
    t = r.inverse_clock(g)
    # guard against inversion round-off pushing a node onto a cell end
    lo, hi = left[owner], right[owner]
    keep = (t > lo) & (t < hi)
    return t[keep]


def build_partition(measure, epsilon):
    """Greedy left-to-right adapted partition with bound ``epsilon``.

    Atoms are forced to be cell right-endpoints; the bound is applied to
    ``eta + (continuous part of dr)`` on each cell, so atom masses only enter
    ``betas``.
    """
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    r = measure.variation
    T = measure.horizon
    breaks = np.unique(np.concatenate(([0.0], r.atom_locations, [T])))
    inner = _subdivide(r, breaks[:-1], breaks[1:], epsilon)
    nodes = np.unique(np.concatenate((breaks, inner)))
    return AdaptedPartition.from_nodes(measure, nodes, epsilon)


def refine(partition, factor):
    """Nested refinement: every old node is kept, the bound shrinks by ``factor``."""
    if not (0 < factor < 1):
        raise DomainError(f"factor must lie in (0, 1), got {factor}")
    eps = partition.epsilon * factor
    r = partition.measure.variation
    inner = _subdivide(r, partition.nodes[:-1], partition.nodes[1:], eps)
    nodes = np.unique(np.concatenate((partition.nodes, inner)))
    return AdaptedPartition.from_nodes(partition.measure, nodes, eps)
