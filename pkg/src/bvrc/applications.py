"""Solvers built on the catching-up scheme.

Sweeping processes, the Skorohod decomposition (Lebesgue and
Riemann-Stieltjes drivers), second-order systems ``x' = u`` with ``u``
governed by a monotone inclusion, and operators depending on the state.

The coupled solvers work on one adapted partition (grid bound ``eps``) and
iterate a plain Picard map on the outer unknown until two successive
iterates are within ``tol`` in the sup norm over the nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .catching_up import BvrcTrajectory, MAX_LEVELS, _assemble, march, solve_levels, time_forcing_step
from .errors import ConsistencyError, DomainError, NonConvergenceError, QuadratureError
from .measures import MixedMeasure, VariationFunction, build_partition
from .monotone import MonotoneFamily, StateDependentFamily, moving_normal_cone
from .perturbations import LipschitzForcing

__all__ = [
    "NodePath",
    "BvDriver",
    "SkorohodResult",
    "CoupledResult",
    "solve_sweeping",
    "path_integral",
    "rs_integral",
    "rs_cumulative",
    "skorohod_solve",
    "skorohod_stieltjes_solve",
    "skorohod_residual",
    "solve_second_order",
    "solve_state_dependent",
]

FEASIBILITY_TOL = 1e-9
RS_TOL = 1e-10
RS_MAX_LEVEL = 14

_GL5_X, _GL5_W = np.polynomial.legendre.leggauss(5)
_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)
_GL2_X, _GL2_W = np.polynomial.legendre.leggauss(2)


def _vec(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class NodePath:
    """Continuous path given by node values, affine in between."""

    nodes: np.ndarray
    values: np.ndarray

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        out = np.stack([np.interp(t, self.nodes, self.values[:, k]) for k in range(self.values.shape[1])], axis=-1)
        return out

    def __call__(self, t):
        return self.evaluate(t)


def _sup(a, b):
    return float(np.max(np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1)))


# ---------------------------------------------------------------------------
# sweeping process


def solve_sweeping(moving_set, measure: MixedMeasure, u0, forcing=None, tol=1e-6, eps0=1e-2, factor=0.5,
                   max_levels=MAX_LEVELS):
    """``-du in N_{C(t)}(u) dnu + drift``; ``moving_set`` is a body or ``t -> body``.

    ``forcing`` may be ``None``, a time drift ``f(t)`` or a
    :class:`LipschitzForcing`.  Every node value is checked to lie in ``C(t)``.
    """
    body_at = moving_set if callable(moving_set) else (lambda t: moving_set)
    u0 = _vec(u0)
    if not body_at(0.0).contains(u0, FEASIBILITY_TOL):
        raise DomainError(f"initial state {u0.tolist()} is not in C(0)")
    family = moving_normal_cone(moving_set)
    if isinstance(forcing, LipschitzForcing):
        def step_forcing(a, b, u):
            return forcing(a, u) * (b - a)
    else:
        step_forcing = time_forcing_step(forcing)
    report = solve_levels(lambda P: march(family, P, u0, step_forcing), measure, tol, eps0, factor, max_levels)
    traj = report.trajectory
    for t, u in zip(traj.nodes, traj.values):
        if not body_at(t).contains(u, FEASIBILITY_TOL):
            raise ConsistencyError(f"node value {u.tolist()} at t={t} is outside C(t)")
    return report


# ---------------------------------------------------------------------------
# integrals of trajectories


def path_integral(traj: BvrcTrajectory):
    """``int_0^{t_j} u(s) ds`` at every node.

    Trapezoid on ordinary cells; on a cell closed by an atom the interpolant
    is constant on the open cell, so the rectangle with the left value is exact.
    """
    P = traj.partition
    v = traj.values
    cell = 0.5 * (v[:-1] + v[1:]) * P.etas[:, None]
    atom = P.atom_mask[1:]
    cell[atom] = v[:-1][atom] * P.etas[atom][:, None]
    return np.vstack([np.zeros((1, v.shape[1])), np.cumsum(cell, axis=0)])


def _cell_quadrature(values_at, nodes, gx, gw):
    """Cumulative per-cell Gauss rule; ``values_at(S)`` maps an array of times to rows."""
    a, b = nodes[:-1], nodes[1:]
    half, mid = 0.5 * (b - a), 0.5 * (a + b)
    pts = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    vals = np.asarray(values_at(pts), dtype=float).reshape(len(a), len(gx), -1)
    cells = np.einsum("k,ckd->cd", gw, vals) * half[:, None]
    return np.vstack([np.zeros((1, cells.shape[1])), np.cumsum(cells, axis=0)])


def _pointwise(b):
    """Vectorise ``b(s, x)`` over rows."""

    def rows(S, X):
        return np.array([np.asarray(b(s, x), dtype=float) for s, x in zip(S, X)])

    return rows


# ---------------------------------------------------------------------------
# Riemann-Stieltjes integrals


@dataclass(frozen=True, eq=False)
class BvDriver:
    """Continuous piecewise-affine driver ``z`` through knots ``(t, z(t))``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if len(t) < 2 or len(t) != len(v):
            raise DomainError("a driver needs at least two knots with matching values")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise DomainError("driver knots must start at 0 and increase strictly")
        if not np.all(np.isfinite(v)):
            raise DomainError("driver values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, z, horizon, n=1000):
        t = np.linspace(0.0, horizon, n + 1)
        return cls(t, np.array([_vec(z(s)) for s in t]))

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def dim(self):
        return self.values.shape[1]

    def __call__(self, t):
        return np.stack([np.interp(t, self.times, self.values[:, k]) for k in range(self.dim)], axis=-1)

    def slopes(self):
        return np.diff(self.values, axis=0) / np.diff(self.times)[:, None]

    def variation(self, s=0.0, t=None):
        """``|z|_{1-var:[s, t]}``."""
        t = self.horizon if t is None else t
        pts = np.unique(np.concatenate(([s, t], self.times[(self.times > s) & (self.times < t)])))
        return float(np.sum(np.linalg.norm(np.diff(self(pts), axis=0), axis=1)))


def _apply_rows(F, dz):
    """Row-wise ``integrand @ dz`` for stacked integrand values ``F``."""
    F = np.asarray(F, dtype=float)
    if F.ndim == 3:
        return np.einsum("nij,nj->ni", F, dz)
    if F.ndim == 1:
        return F[:, None] * dz
    if F.ndim == 2 and dz.shape[1] == 1:
        return F * dz
    raise DomainError("integrand must be a scalar, a matrix, or a vector with a scalar driver")


def _gl_pieces(g, lo, hi, tol=RS_TOL, max_level=RS_MAX_LEVEL):
    """Integrals over ``[lo_k, hi_k]`` by 5-point Gauss with panel doubling.

    ``g(S, k)`` evaluates the integrand at times ``S`` lying in pieces ``k``.
    A piece is accepted once two successive levels differ by at most ``tol``.
    """

    def level(idx, m):
        n = 2 ** m
        width = (hi[idx] - lo[idx]) / n
        left = lo[idx][:, None] + width[:, None] * np.arange(n)[None, :]
        mid = left + 0.5 * width[:, None]
        pts = mid[:, :, None] + (0.5 * width)[:, None, None] * _GL5_X[None, None, :]
        owner = np.repeat(idx, n * len(_GL5_X))
        vals = g(pts.ravel(), owner).reshape(len(idx), n * len(_GL5_X), -1)
        w = np.tile(_GL5_W, n)[None, :, None] * (0.5 * width)[:, None, None]
        return np.sum(vals * w, axis=1)

    pending = np.arange(len(lo))
    prev = level(pending, 0)
    out = np.zeros_like(prev)
    for m in range(1, max_level + 1):
        cur = level(pending, m)
        done = np.max(np.abs(cur - prev), axis=1) <= tol
        out[pending[done]] = cur[done]
        pending, prev = pending[~done], cur[~done]
        if not len(pending):
            return out
    raise QuadratureError(f"Riemann-Stieltjes sums did not settle to {tol} on {len(pending)} pieces")


def _rs_pieces(values_at, driver: BvDriver, t_end, breakpoints=()):
    if not 0 <= t_end <= driver.horizon * (1 + 1e-14):
        raise DomainError(f"time {t_end} outside the driver horizon")
    bps = np.concatenate((driver.times, np.asarray(breakpoints, dtype=float).ravel(), [0.0, t_end]))
    bps = np.unique(bps[(bps >= 0) & (bps <= t_end)])
    if len(bps) < 2:
        return bps, np.zeros((0, 1))
    slopes = driver.slopes()
    piece_slope = np.clip(np.searchsorted(driver.times, bps[:-1], side="right") - 1, 0, len(slopes) - 1)

    def g(S, k):
        return _apply_rows(values_at(S), slopes[piece_slope[k]])

    return bps, _gl_pieces(g, bps[:-1], bps[1:])


def _stack(integrand):
    return lambda S: np.array([np.asarray(integrand(s), dtype=float) for s in S])


def rs_integral(integrand: Callable, driver: BvDriver, t, breakpoints=()):
    """``int_0^t integrand(tau) dz_tau`` for the piecewise-affine driver ``z``.

    ``integrand(tau)`` is a scalar, a matrix acting on ``dz``, or a vector
    when ``z`` is scalar.  ``breakpoints`` marks kinks of the integrand.
    """
    bps, pieces = _rs_pieces(_stack(integrand), driver, float(t), breakpoints)
    return pieces.sum(axis=0) if len(pieces) else np.zeros(driver.dim)


def rs_cumulative(integrand: Callable, driver: BvDriver, times, breakpoints=(), vectorized=False):
    """The integral at every time of the sorted array ``times`` in one pass.

    With ``vectorized=True``, ``integrand`` maps an array of times to stacked values.
    """
    times = np.asarray(times, dtype=float)
    values_at = integrand if vectorized else _stack(integrand)
    bps, pieces = _rs_pieces(values_at, driver, float(times[-1]), np.concatenate((np.ravel(breakpoints), times)))
    cum = np.vstack([np.zeros((1, pieces.shape[1])), np.cumsum(pieces, axis=0)])
    return cum[np.searchsorted(bps, times)]


# ---------------------------------------------------------------------------
# Skorohod decomposition


@dataclass
class SkorohodResult:
    X: BvrcTrajectory
    Y: BvrcTrajectory
    h: NodePath
    iterations: int
    residual: float
    history: list = field(default_factory=list)

    def X_at(self, t):
        """``h(t) + Y(t)``."""
        return self.h(t) + self.Y.evaluate(t)


def _picard(update, h0, tol, max_iters, label):
    h = h0
    history = []
    state = None
    for k in range(1, max_iters + 1):
        h_new, state = update(h)
        history.append(_sup(h_new, h))
        h = h_new
        if history[-1] <= tol:
            return h, state, k, history
    raise NonConvergenceError(
        f"{label}: no fixed point within {tol} after {max_iters} iterations (last distance {history[-1]:.3e})",
        history,
        (h, state),
    )


def skorohod_residual(b, X_at, Y: BvrcTrajectory, X_values):
    """``max_j |X(t_j) - int_0^{t_j} b(s, X(s)) ds - Y(t_j)|`` with a 3-point Gauss rule."""
    rows = _pointwise(b)
    H = _cell_quadrature(lambda S: rows(S, X_at(S)), Y.partition.nodes, _GL3_X, _GL3_W)
    return _sup(X_values - H, Y.values)


def _skorohod(family, measure, y0, eps, tol, max_iters, drift_integral, label, recheck):
    P = build_partition(measure, eps)
    y0 = _vec(y0)
    X_at = lambda S: np.tile(y0, (len(S), 1))
    Xvals = np.tile(y0, (len(P.nodes), 1))
    history = []
    for k in range(1, max_iters + 1):
        h_vals = drift_integral(P, X_at)
        h = NodePath(P.nodes, h_vals)
        # the forcing +h of the inclusion is a drift -h
        Y = march(family, P, y0, time_forcing_step(lambda s, h=h: -h(s)))
        X_at = lambda S, h=h, Y=Y: h(S) + Y.evaluate(S)
        Xn = h_vals + Y.values
        history.append(_sup(Xn, Xvals))
        Xvals = Xn
        if history[-1] <= tol:
            residual = recheck(X_at, Y, Xvals)
            if residual <= tol:
                X = _assemble(P, Xvals.copy(), Y.k1, Y.k2)
                return SkorohodResult(X, Y, h, k, residual, history)
    raise NonConvergenceError(
        f"{label}: no convergence within {tol} after {max_iters} iterations (last distance {history[-1]:.3e})",
        history,
        (h, Y),
    )


def skorohod_solve(family: MonotoneFamily, b: Callable, y0, measure: MixedMeasure, tol=1e-6, eps=1e-3,
                   max_iters=100):
    """``X = int b(s, X) ds + Y`` with ``-dY/dnu in A(t) Y + (int_0^t b(s, X) ds) dlambda/dnu``.

    Picard on ``X`` starting from ``X = y0``; stops when two iterates are
    within ``tol`` and the decomposition residual, recomputed with a
    different quadrature rule, is within ``tol`` too.
    """
    rows = _pointwise(lambda s, x: _vec(b(s, x)))

    def drift_integral(P, X_at):
        return _cell_quadrature(lambda S: rows(S, X_at(S)), P.nodes, _GL2_X, _GL2_W)

    def recheck(X_at, Y, Xvals):
        return skorohod_residual(b, X_at, Y, Xvals)

    return _skorohod(family, measure, y0, eps, tol, max_iters, drift_integral, "skorohod", recheck)


def skorohod_stieltjes_solve(family: MonotoneFamily, b: Callable, driver: BvDriver, a, measure: MixedMeasure,
                             tol=1e-6, eps=1e-3, max_iters=100):
    """Skorohod decomposition with ``h(t) = int_0^t b(tau, X(tau)) dz_tau``."""
    if abs(driver.horizon - measure.horizon) > 1e-12:
        raise DomainError("driver and measure must share the horizon")
    kinks = measure.variation.knots[:, 0]
    rows = _pointwise(b)
    slopes = driver.slopes()

    def drift_integral(P, X_at):
        return rs_cumulative(lambda S: rows(S, X_at(S)), driver, P.nodes, kinks, vectorized=True)

    def recheck(X_at, Y, Xvals):
        # fixed 3-point Gauss on cells cut at the driver knots, dz = z' ds
        nodes = Y.partition.nodes
        finer = np.unique(np.concatenate((nodes, driver.times)))

        def values(S):
            k = np.clip(np.searchsorted(driver.times, S, side="right") - 1, 0, len(slopes) - 1)
            return _apply_rows(rows(S, X_at(S)), slopes[k])

        H = _cell_quadrature(values, finer, _GL3_X, _GL3_W)[np.searchsorted(finer, nodes)]
        return _sup(Xvals - H, Y.values)

    return _skorohod(family, measure, a, eps, tol, max_iters, drift_integral, "skorohod-stieltjes", recheck)


# ---------------------------------------------------------------------------
# coupled second-order systems


@dataclass
class CoupledResult:
    x: NodePath
    u: BvrcTrajectory
    iterations: int
    fixed_point_residual: float
    history: list = field(default_factory=list)


def _coupled_forcing(f, h: NodePath):
    if f is None:
        return None

    def forcing(t_prev, t_next, u_prev):
        return _vec(f(t_prev, h(t_prev), u_prev)) * (t_next - t_prev)

    return forcing


def _second_order(family_for, f, x0, u0, P, tol, max_iters, label):
    x0 = _vec(x0)
    h0 = np.tile(x0, (len(P.nodes), 1))

    def update(hvals):
        h = NodePath(P.nodes, hvals)
        u = march(family_for(h), P, u0, _coupled_forcing(f, h))
        return x0 + path_integral(u), u

    hvals, u, k, hist = _picard(update, h0, tol, max_iters, label)
    return CoupledResult(NodePath(P.nodes, hvals), u, k, hist[-1], hist)


def solve_second_order(family: MonotoneFamily, f: Callable | None, x0, u0, measure: MixedMeasure, tol=1e-6,
                       eps=1e-3, max_iters=100):
    """``x(t) = x0 + int_0^t u``, ``-du/dnu in A(t) u`` with drift ``f(t, x, u)``."""
    P = build_partition(measure, eps)
    return _second_order(lambda h: family, f, x0, u0, P, tol, max_iters, "second-order")


def solve_state_dependent(state_family: StateDependentFamily, f: Callable | None, x0, u0,
                          variation: VariationFunction, gamma=0.0, tol=1e-6, eps=1e-3, max_iters=100):
    """As :func:`solve_second_order` with the operator ``A_(t, x(t))``.

    The driving measure is ``lambda + d(r + gamma t)``.
    """
    measure = MixedMeasure(variation.plus_linear(gamma))
    P = build_partition(measure, eps)
    return _second_order(state_family.frozen, f, x0, u0, P, tol, max_iters, "state-dependent")
