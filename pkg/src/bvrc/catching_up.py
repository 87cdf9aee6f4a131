"""Catching-up time stepping for ``-du in A(t) u dnu`` with a drift.

Sign convention: a forcing ``f`` passed to the solvers is a *drift*.  Inside
the domain the solution follows ``du/dt = f``; on the boundary the operator
term pushes back.  A single step on a cell of ``nu``-mass ``beta`` reads::

    u_next = J_beta^{A(t_next)}(u_prev + int_cell f dlambda)

which is :func:`step` called with ``forcing_integral = -int_cell f dlambda``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Callable

import numpy as np

from .errors import ConsistencyError, DomainError, NonConvergenceError
from .measures import AdaptedPartition, MixedMeasure, build_partition, refine

__all__ = [
    "BvrcTrajectory",
    "SolveReport",
    "step",
    "run_grid",
    "march",
    "evaluate",
    "density",
    "solve",
    "solve_levels",
    "apriori_constants",
    "time_forcing_step",
    "sup_distance",
]

DOMAIN_TOL = 1e-9
MAX_LEVELS = 20
# refinement stops before a level would exceed this many cells
MAX_CELLS = 250_000
# relative slack on the a-priori bounds (round-off only)
BOUND_SLACK = 1e-9

_GL2 = 0.5 / math.sqrt(3.0)


@dataclass(frozen=True, eq=False)
class BvrcTrajectory:
    """Node values of a right-continuous BV path on an adapted partition.

    ``values[j]`` is ``u(t_j)``; ``left_limits[j]`` is ``u(t_j-)`` (equal to
    ``values[j]`` off atoms).  ``densities[i]`` is ``du/dnu`` on the open part
    of cell ``i`` and ``atom_densities[i]`` its value on the atom closing the
    cell (0 when there is none).
    """

    partition: AdaptedPartition
    values: np.ndarray
    left_limits: np.ndarray = field(repr=False)
    densities: np.ndarray = field(repr=False)
    atom_densities: np.ndarray = field(repr=False)
    k1: float = math.inf
    k2: float = math.inf

    @property
    def nodes(self):
        return self.partition.nodes

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def initial(self):
        return self.values[0]

    @property
    def final(self):
        return self.values[-1]

    def total_variation(self):
        return float(np.sum(np.linalg.norm(np.diff(self.values, axis=0), axis=1)))

    def evaluate(self, t):
        return evaluate(self, t)

    def density(self, t):
        return density(self, t)


@dataclass
class SolveReport:
    trajectory: BvrcTrajectory
    epsilon_sequence: list
    sup_distances: list
    velocity_bound: float
    state_bound: float
    info: dict = field(default_factory=dict)


def step(family, forcing_integral, t_next, beta, u_prev):
    """One catching-up step ``J_beta^{A(t_next)}(u_prev - forcing_integral)``."""
    if not beta > 0:
        raise DomainError("cell mass must be positive")
    x = np.atleast_1d(np.asarray(u_prev, dtype=float))
    if forcing_integral is not None:
        x = x - forcing_integral
    return np.atleast_1d(family.resolvent(t_next, beta, x))


def apriori_constants(u0_norm, growth, forcing_bound, total_mass):
    """``(K1, K2)``: state bound and velocity bound of the discrete scheme."""
    c, M, nu = growth, forcing_bound, total_mass
    k1 = (u0_norm + (2 * (1 + c) + M) * nu) * math.exp(2 * c * nu)
    k2 = 2 * c * k1 + 2 * (1 + c) + M
    return k1, k2


def time_forcing_step(f):
    """Drift integral over a cell for a time-only forcing (2-point Gauss)."""
    if f is None:
        return None

    def forcing(t_prev, t_next, u_prev):
        h = t_next - t_prev
        mid = 0.5 * (t_prev + t_next)
        a = np.atleast_1d(np.asarray(f(mid - _GL2 * h), dtype=float))
        b = np.atleast_1d(np.asarray(f(mid + _GL2 * h), dtype=float))
        return 0.5 * h * (a + b)

    return forcing


def _check_initial(family, u0):
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    if not np.all(np.isfinite(u0)):
        raise DomainError("initial state must be finite")
    if not family.contains(0.0, u0, DOMAIN_TOL):
        raise DomainError(f"initial state {u0.tolist()} is not in the domain of A(0)")
    return u0


def march(family, partition: AdaptedPartition, u0, forcing=None, check_bounds=True):
    """Run the scheme on ``partition``.

    ``forcing(t_prev, t_next, u_prev)`` returns the drift integral over the
    cell (or ``None``).  The a-priori bounds are asserted after the run with
    the realised forcing bound ``M = max |int f| / eta``.
    """
    u0 = _check_initial(family, u0)
    nodes, betas, etas = partition.nodes, partition.betas, partition.etas
    n = partition.n_cells
    values = np.empty((n + 1, u0.size))
    values[0] = u0
    m_real = 0.0
    u = u0
    for i in range(n):
        drift = None
        if forcing is not None:
            drift = np.atleast_1d(forcing(nodes[i], nodes[i + 1], u))
            m_real = max(m_real, float(np.linalg.norm(drift)) / etas[i])
            drift = -drift
        u = step(family, drift, nodes[i + 1], betas[i], u)
        values[i + 1] = u
    if not np.all(np.isfinite(values)):
        raise ConsistencyError("non-finite state produced by the scheme")

    k1, k2 = apriori_constants(float(np.linalg.norm(u0)), family.growth, m_real, float(np.sum(betas)))
    if check_bounds:
        norms = np.linalg.norm(values, axis=1)
        jumps = np.linalg.norm(np.diff(values, axis=0), axis=1)
        if np.any(norms > k1 * (1 + BOUND_SLACK) + 1e-12):
            j = int(np.argmax(norms - k1))
            raise ConsistencyError(f"state bound violated at t={nodes[j]}: |u|={norms[j]} > K1={k1}")
        if np.any(jumps > k2 * betas * (1 + BOUND_SLACK) + 1e-12):
            j = int(np.argmax(jumps - k2 * betas))
            raise ConsistencyError(
                f"velocity bound violated on cell ending at t={nodes[j + 1]}: "
                f"|du|={jumps[j]} > K2*beta={k2 * betas[j]}"
            )
    return _assemble(partition, values, k1, k2)


def _assemble(partition, values, k1, k2):
    mask = partition.atom_mask
    left = values.copy()
    # at an atom the whole cell increment is carried by the jump
    left[1:][mask[1:]] = values[:-1][mask[1:]]
    du = np.diff(values, axis=0)
    cell_mask = mask[1:]
    dens = du / partition.betas[:, None]
    dens[cell_mask] = 0.0
    atom_dens = np.zeros_like(du)
    if np.any(cell_mask):
        jumps = partition.deltas[cell_mask] - partition.continuous_masses[cell_mask]
        atom_dens[cell_mask] = du[cell_mask] / jumps[:, None]
    for a in (values, left, dens, atom_dens):
        a.setflags(write=False)
    return BvrcTrajectory(partition, values, left, dens, atom_dens, k1, k2)


def run_grid(family, f, u0, partition, check_bounds=True):
    """Scheme on one partition with a time-only drift ``f(t)`` (or ``None``)."""
    return march(family, partition, u0, time_forcing_step(f), check_bounds)


def _times(traj, t):
    t = np.asarray(t, dtype=float)
    T = traj.partition.measure.horizon
    if np.any(t < 0) or np.any(t > T):
        raise DomainError(f"time outside [0, {T}]")
    return t


def evaluate(traj: BvrcTrajectory, t):
    """``nu``-affine interpolant; constant on the open part of atom cells."""
    t = _times(traj, t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    P = traj.partition
    i = np.searchsorted(P.nodes, t, side="right") - 1
    i = np.clip(i, 0, P.n_cells - 1)
    at_end = t >= P.nodes[-1]
    r = P.measure.variation
    # nu(]t_i, t]) restricted to the open cell: no atom lies strictly inside
    mass = (t - P.nodes[i]) + r.continuous(t) - r.continuous(P.nodes[i])
    w = np.where(P.atom_mask[i + 1], 0.0, mass / P.betas[i])
    out = traj.values[i] + w[:, None] * (traj.values[i + 1] - traj.values[i])
    out[at_end] = traj.values[-1]
    return out[0] if scalar else out


def density(traj: BvrcTrajectory, t):
    """``du/dnu`` at ``t``: the atom density at an atom node, the cell value elsewhere."""
    t = float(_times(traj, t))
    P = traj.partition
    j = int(np.searchsorted(P.nodes, t))
    if j < len(P.nodes) and P.nodes[j] == t and P.atom_mask[j]:
        return traj.atom_densities[j - 1].copy()
    i = int(np.clip(np.searchsorted(P.nodes, t, side="right") - 1, 0, P.n_cells - 1))
    return traj.densities[i].copy()


def sup_distance(coarse: BvrcTrajectory, fine: BvrcTrajectory):
    """``max_j |coarse(t_j) - fine(t_j)|`` over the fine nodes."""
    diff = evaluate(coarse, fine.nodes) - fine.values
    return float(np.max(np.linalg.norm(diff, axis=1)))


def solve_levels(run_level: Callable, measure: MixedMeasure, tol, eps0, factor, max_levels=MAX_LEVELS):
    """Nested-refinement driver shared by the solvers.

    ``run_level(partition)`` returns a trajectory; levels continue until two
    consecutive trajectories are within ``tol``.  ``NonConvergenceError`` is
    raised after ``max_levels`` levels or before a level would exceed
    ``MAX_CELLS`` cells.
    """
    if not tol > 0:
        raise DomainError("tolerance must be positive")
    if not 0 < factor < 1:
        raise DomainError("refinement factor must lie in (0, 1)")
    part = build_partition(measure, eps0)
    prev = run_level(part)
    eps_seq, dists = [eps0], []
    for _ in range(max_levels - 1):
        part = refine(part, factor)
        if part.n_cells > MAX_CELLS:
            break
        cur = run_level(part)
        eps_seq.append(part.epsilon)
        dists.append(sup_distance(prev, cur))
        prev = cur
        if dists[-1] <= tol:
            return SolveReport(cur, eps_seq, dists, cur.k2, cur.k1)
    last = f"{dists[-1]:.3e}" if dists else "n/a"
    raise NonConvergenceError(
        f"no convergence to {tol} within {len(eps_seq)} levels (last distance {last})",
        dists,
        SolveReport(prev, eps_seq, dists, prev.k2, prev.k1),
    )


def solve(family, f, u0, measure: MixedMeasure, tol=1e-6, eps0=1e-2, factor=0.5, max_levels=MAX_LEVELS):
    """Converged solution for a time-only drift ``f`` (``None`` for none)."""
    forcing = time_forcing_step(f)
    return solve_levels(lambda P: march(family, P, u0, forcing), measure, tol, eps0, factor, max_levels)
