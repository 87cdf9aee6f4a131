"""Riemann-Liouville integrals, the Green function of the fractional boundary
value problem and the coupled fractional/monotone solver.

The problem on ``I = [0, 1]`` is ``D^alpha u + kappa D^(alpha-1) u = zeta``
with ``I^beta u(0) = 0`` and ``u(1) = I^gamma u(1)``.  Writing

    m_q(x) = exp(-kappa x) M(q; q + 1; kappa x) / Gamma(q + 1)

(``M`` is Kummer's function) one has
``e^{kappa s} I^q_{s+}(e^{-kappa .})(t) = (t - s)^q m_q(t - s)``, which gives
closed expressions for ``mu0``, ``phi`` and ``G`` in terms of ``m_q``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gamma as Gamma, hyp1f1, roots_jacobi

from .catching_up import march
from .errors import DegenerateParametersError, DomainError, NonConvergenceError, QuadratureError
from .measures import MixedMeasure, build_partition
from .applications import CoupledResult, NodePath

__all__ = [
    "FractionalParams",
    "GreenKernel",
    "FractionalSolution",
    "fractional_integral",
    "weighted_rule",
    "green_mu0",
    "green_function",
    "solve_fractional_bvp",
    "boundary_residuals",
    "solve_fractional_coupled",
]

GL_POINTS = 16
GRADING_LEVELS = 20
QUAD_TOL = 1e-10
MAX_SUBDIVISION = 64
MU0_FLOOR = 1e-12

_GLX, _GLW = np.polynomial.legendre.leggauss(GL_POINTS)


@lru_cache(maxsize=64)
def weighted_rule(p, n_sub=1):
    """Nodes/weights for ``int_0^1 x^(p-1) g(x) dx``.

    Panels are graded geometrically towards both ends.  The panel touching
    ``x = 0`` uses Gauss-Jacobi with the exact weight ``x^(p-1)``; all other
    panels use Gauss-Legendre on ``x^(p-1) g(x)`` split into ``n_sub`` pieces.
    """
    if not p > 0:
        raise DomainError("order must be positive")
    edges = 0.5 * 0.5 ** np.arange(GRADING_LEVELS + 1)  # 1/2, 1/4, ..., tiny
    delta = edges[-1]
    xs, ws = [], []
    # innermost panel [0, delta] with weight x^(p-1)
    xi, wi = roots_jacobi(GL_POINTS, 0.0, p - 1.0)
    xs.append(delta * (1 + xi) / 2)
    ws.append(wi * delta ** p * 2.0 ** (-p))
    panels = [(edges[k + 1], edges[k]) for k in range(GRADING_LEVELS)]
    panels += [(1 - edges[k], 1 - edges[k + 1]) for k in range(GRADING_LEVELS)]
    panels.append((1 - delta, 1.0))
    for lo, hi in panels:
        cuts = np.linspace(lo, hi, n_sub + 1)
        for a, b in zip(cuts[:-1], cuts[1:]):
            half, mid = 0.5 * (b - a), 0.5 * (a + b)
            x = mid + half * _GLX
            xs.append(x)
            ws.append(half * _GLW * x ** (p - 1))
    x, w = np.concatenate(xs), np.concatenate(ws)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _eval_rows(fn, pts):
    """Evaluate ``fn`` on an array of times; returns ``pts.shape + (d,)``."""
    flat = pts.ravel()
    vals = np.asarray(fn(flat), dtype=float)
    if vals.shape[:1] != flat.shape:
        vals = np.array([np.asarray(fn(s), dtype=float) for s in flat])
    if vals.ndim == 1:
        vals = vals[:, None]
    return vals.reshape(pts.shape + vals.shape[1:])


def _apply_rule(fn, p, n_sub, a, t):
    x, w = weighted_rule(p, n_sub)
    L = t - a
    vals = _eval_rows(fn, t[:, None] - L[:, None] * x[None, :])
    return (L ** p / Gamma(p))[:, None] * np.einsum("k,tkd->td", w, vals)


def fractional_integral(phi, a, order, t):
    """``I^order_{a+} phi (t) = int_a^t (t-s)^(order-1) / Gamma(order) phi(s) ds``.

    ``phi`` should accept an array of times (a per-point fallback is used
    otherwise) and may be vector valued.  Panels are doubled until two
    successive values agree to ``1e-10`` (relative to their size above 1).
    """
    if not order > 0:
        raise DomainError("order must be positive")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr <= a):
        raise DomainError("fractional integral needs t > a")
    a_arr = np.full_like(t_arr, float(a))
    prev = _apply_rule(phi, order, 1, a_arr, t_arr)
    n = 2
    while n <= MAX_SUBDIVISION:
        cur = _apply_rule(phi, order, n, a_arr, t_arr)
        if np.max(np.abs(cur - prev) / np.maximum(1.0, np.abs(cur))) <= QUAD_TOL:
            break
        prev, n = cur, 2 * n
    else:
        raise QuadratureError(f"fractional integral did not settle to {QUAD_TOL}")
    out = cur if cur.shape[1] > 1 else cur[:, 0]
    return out[0] if np.ndim(t) == 0 else out


# ---------------------------------------------------------------------------
# Green function


@dataclass(frozen=True)
class FractionalParams:
    alpha: float
    gamma: float
    kappa: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if not 1 < self.alpha <= 2:
            raise DomainError(f"alpha must lie in (1, 2], got {self.alpha}")
        if not 0 <= self.beta <= 2 - self.alpha:
            raise DomainError(f"beta must lie in [0, 2 - alpha], got {self.beta}")
        if not self.gamma > 0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        if not self.kappa >= 0:
            raise DomainError(f"kappa must be nonnegative, got {self.kappa}")


class GreenKernel:
    """``G(t, s)`` on ``[0, 1]^2`` with ``mu0`` and the bound ``m_g``."""

    def __init__(self, params: FractionalParams):
        self.params = params
        a, g = params.alpha, params.gamma
        self._q1, self._q2 = a - 1.0, a - 1.0 + g
        mu0 = float(self.m(self._q1, 1.0) - self.m(self._q2, 1.0))
        if abs(mu0) < MU0_FLOOR:
            raise DegenerateParametersError(f"degenerate parameters: mu0 = {mu0:.3e} vanishes for {params}")
        self.mu0 = mu0
        self.m_g = (1 / Gamma(a)) * ((1 + Gamma(g + 1)) / (abs(mu0) * Gamma(a) * Gamma(g + 1)) + 1)
        self._grid = None

    def m(self, q, x):
        """``exp(-kappa x) M(q; q+1; kappa x) / Gamma(q + 1)``."""
        x = np.asarray(x, dtype=float)
        k = self.params.kappa
        if k == 0:
            return np.full_like(x, 1.0 / Gamma(q + 1))
        return np.exp(-k * x) * hyp1f1(q, q + 1, k * x) / Gamma(q + 1)

    def piece(self, q, s, t):
        """``I^q_{s+}(e^{-kappa .})(t)`` for ``s <= t``."""
        s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
        x = np.maximum(t - s, 0.0)
        return np.exp(-self.params.kappa * s) * x ** q * self.m(q, x)

    def phi(self, s):
        x = 1.0 - np.asarray(s, dtype=float)
        return (x ** self._q2 * self.m(self._q2, x) - x ** self._q1 * self.m(self._q1, x)) / self.mu0

    def start_term(self, t):
        """``I^(alpha-1)_{0+}(e^{-kappa .})(t)``."""
        t = np.asarray(t, dtype=float)
        return t ** self._q1 * self.m(self._q1, t)

    def __call__(self, t, s):
        t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        if np.any((t < 0) | (t > 1) | (s < 0) | (s > 1)):
            raise DomainError("G is defined on [0, 1]^2")
        x = np.maximum(t - s, 0.0)
        local = np.where(s <= t, x ** self._q1 * self.m(self._q1, x), 0.0)
        out = self.phi(s) * self.start_term(t) + local
        return float(out) if out.ndim == 0 else out

    def grid(self, n=201):
        """``(times, G[t_i, s_j])`` on a uniform ``n x n`` grid (cached)."""
        if self._grid is None or len(self._grid[0]) != n:
            ts = np.linspace(0.0, 1.0, n)
            self._grid = (ts, self(ts[:, None], ts[None, :]))
        return self._grid

    def grid_csv(self, n=201):
        ts, G = self.grid(n)
        lines = ["t,s,G"]
        for i, t in enumerate(ts):
            for j, s in enumerate(ts):
                lines.append(f"{t:.17g},{s:.17g},{G[i, j]:.17g}")
        return "\n".join(lines) + "\n"


def green_mu0(params: FractionalParams):
    return GreenKernel(params).mu0


def green_function(kernel: GreenKernel, t, s):
    return kernel(t, s)


# ---------------------------------------------------------------------------
# boundary value problem


class FractionalSolution:
    """``u(t) = int_0^1 G(t, s) zeta(s) ds``, evaluated on demand.

    ``u(t) = I^(alpha-1)(e^{-kappa .})(t) * C + int_0^t x^(alpha-1) m(x) zeta(t - x) dx``
    with ``C = int_0^1 phi(s) zeta(s) ds``.
    """

    def __init__(self, kernel: GreenKernel, zeta, n_sub=None):
        self.kernel, self.zeta = kernel, zeta
        if n_sub is None:
            n_sub = self._settle()
        self.n_sub = n_sub
        self.constant = self._constant(n_sub)

    def _constant(self, n_sub):
        k = self.kernel
        out = 0.0
        for q, sign in ((k._q2, 1.0), (k._q1, -1.0)):
            x, w = weighted_rule(q + 1, n_sub)
            vals = _eval_rows(self.zeta, 1.0 - x)
            out = out + sign * np.einsum("k,kd->d", w * k.m(q, x), vals)
        return out / k.mu0

    def _local(self, t, n_sub):
        k = self.kernel
        q = k._q1
        x, w = weighted_rule(q + 1, n_sub)
        X = t[:, None] * x[None, :]
        vals = _eval_rows(self.zeta, t[:, None] - X)
        return (t ** (q + 1))[:, None] * np.einsum("tk,tkd->td", w[None, :] * k.m(q, X), vals)

    def _eval(self, t, n_sub, constant):
        return self.kernel.start_term(t)[:, None] * constant[None, :] + self._local(t, n_sub)

    def _settle(self):
        probe = np.array([0.25, 0.5, 0.75, 1.0])
        prev = self._eval(probe, 1, self._constant(1))
        n = 2
        while n <= MAX_SUBDIVISION:
            cur = self._eval(probe, n, self._constant(n))
            if np.max(np.abs(cur - prev) / np.maximum(1.0, np.abs(cur))) <= QUAD_TOL:
                return n
            prev, n = cur, 2 * n
        raise QuadratureError("boundary value quadrature did not settle")

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any((t_arr < 0) | (t_arr > 1)):
            raise DomainError("the solution lives on [0, 1]")
        out = self._eval(t_arr, self.n_sub, self.constant)
        out = out if out.shape[1] > 1 else out[:, 0]
        return out[0] if np.ndim(t) == 0 else out


def solve_fractional_bvp(zeta, params, n_sub=None):
    """Solution of the boundary value problem with right-hand side ``zeta``."""
    kernel = params if isinstance(params, GreenKernel) else GreenKernel(params)
    return FractionalSolution(kernel, zeta, n_sub)


def boundary_residuals(u: FractionalSolution, t_small=1e-12):
    """``(|I^beta u(0)|, |u(1) - I^gamma u(1)|)``.

    For ``beta > 0`` the first entry is ``|I^beta u(t_small)|``, the left
    value being zero by definition.
    """
    p = u.kernel.params
    if p.beta == 0:
        r0 = float(np.max(np.abs(u(0.0))))
    else:
        r0 = float(np.max(np.abs(fractional_integral(u, 0.0, p.beta, t_small))))
    r1 = float(np.max(np.abs(u(1.0) - fractional_integral(u, 0.0, p.gamma, 1.0))))
    return r0, r1


# ---------------------------------------------------------------------------
# coupled system


def solve_fractional_coupled(family, f, u0, params, measure: MixedMeasure | None = None, tol=1e-6, eps=1e-3,
                             max_iters=100):
    """Fixed point ``h = int_0^1 G(., s) u_h(s) ds`` where ``u_h`` solves the
    inclusion on ``[0, 1]`` with drift ``f(t, h(t), u)``.

    Returns a :class:`CoupledResult` whose ``x`` field holds ``h``.
    """
    kernel = params if isinstance(params, GreenKernel) else GreenKernel(params)
    if measure is None:
        from .measures import VariationFunction

        measure = MixedMeasure(VariationFunction(1.0))
    if measure.horizon != 1.0:
        raise DomainError("the fractional problem lives on [0, 1]")
    P = build_partition(measure, eps)
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    h_vals = np.zeros((len(P.nodes), u0.size))
    history = []
    u = None
    for k in range(1, max_iters + 1):
        h = NodePath(P.nodes, h_vals)
        def forcing(t_prev, t_next, u_prev, h=h):
            return np.atleast_1d(f(t_prev, h(t_prev), u_prev)) * (t_next - t_prev)

        u = march(family, P, u0, forcing if f is not None else None)
        sol = FractionalSolution(kernel, lambda S, u=u: u.evaluate(np.clip(S, 0.0, 1.0)), n_sub=1)
        new = np.asarray(sol(P.nodes), dtype=float).reshape(len(P.nodes), -1)
        history.append(float(np.max(np.linalg.norm(new - h_vals, axis=1))))
        h_vals = new
        if history[-1] <= tol:
            return CoupledResult(NodePath(P.nodes, h_vals), u, k, history[-1], history)
    raise NonConvergenceError(
        f"fractional coupling: no fixed point within {tol} after {max_iters} iterations "
        f"(last distance {history[-1]:.3e})",
        history,
        (NodePath(P.nodes, h_vals), u),
    )
