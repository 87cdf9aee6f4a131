"""Maximal monotone operators accessed through their resolvents.

A *snapshot* is a single operator ``A`` with a ``resolvent(eta, x)`` method
computing ``(I + eta A)^{-1} x`` and, when known, a ``min_section(x)`` method
returning the element of least norm of ``A x``.  A :class:`MonotoneFamily`
maps a time to a snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Callable, Sequence

import numpy as np

from .errors import CapabilityError, DomainError, InfeasibleSetError, OperatorError

__all__ = [
    "Box",
    "Ball",
    "Halfspace",
    "Intersection",
    "project",
    "hausdorff",
    "NormalCone",
    "LinearOperator",
    "Prox",
    "MonotoneFamily",
    "StateDependentFamily",
    "moving_normal_cone",
    "psd_linear",
    "prox_family",
    "soft_threshold",
    "resolvent",
    "pseudo_distance",
    "vladimirov_dis",
    "lemma23_bound",
    "state_interval_family",
]

DYKSTRA_TOL = 1e-12
DYKSTRA_MAX_SWEEPS = 10_000
MEMBERSHIP_TOL = 1e-9


def _vec(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# convex bodies


class Box:
    """Axis-aligned box ``{x : lower <= x <= upper}``; infinite bounds allowed."""

    def __init__(self, lower, upper):
        lower, upper = _vec(lower), _vec(upper)
        if lower.shape != upper.shape:
            raise DomainError("box bounds have different shapes")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)) or np.any(lower > upper):
            raise DomainError("box requires lower <= upper in every coordinate")
        self.lower, self.upper = lower, upper

    @property
    def dim(self):
        return self.lower.size

    def project(self, x):
        return np.clip(_vec(x), self.lower, self.upper)

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = _vec(x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def translate(self, v):
        v = _vec(v)
        return Box(self.lower + v, self.upper + v)

    def __eq__(self, other):
        return isinstance(other, Box) and np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __repr__(self):
        return f"Box({self.lower.tolist()}, {self.upper.tolist()})"


class Ball:
    """Closed Euclidean ball."""

    def __init__(self, center, radius):
        if not (radius >= 0 and math.isfinite(radius)):
            raise DomainError("ball radius must be finite and >= 0")
        self.center, self.radius = _vec(center), float(radius)

    @property
    def dim(self):
        return self.center.size

    def project(self, x):
        d = _vec(x) - self.center
        n = np.linalg.norm(d)
        if n <= self.radius:
            return self.center + d
        return self.center + d * (self.radius / n)

    def contains(self, x, tol=MEMBERSHIP_TOL):
        return bool(np.linalg.norm(_vec(x) - self.center) <= self.radius + tol)

    def translate(self, v):
        return Ball(self.center + _vec(v), self.radius)

    def __eq__(self, other):
        return isinstance(other, Ball) and np.array_equal(self.center, other.center) and self.radius == other.radius

    def __repr__(self):
        return f"Ball({self.center.tolist()}, {self.radius})"


class Halfspace:
    """``{x : <normal, x> <= offset}``."""

    def __init__(self, normal, offset):
        normal = _vec(normal)
        nn = float(normal @ normal)
        if nn == 0:
            raise DomainError("halfspace normal must be nonzero")
        self.normal, self.offset, self._nn = normal, float(offset), nn

    @property
    def dim(self):
        return self.normal.size

    def project(self, x):
        x = _vec(x)
        excess = float(self.normal @ x) - self.offset
        if excess <= 0:
            return x.copy()
        return x - (excess / self._nn) * self.normal

    def contains(self, x, tol=MEMBERSHIP_TOL):
        return bool((self.normal @ _vec(x) - self.offset) / math.sqrt(self._nn) <= tol)

    def translate(self, v):
        return Halfspace(self.normal, self.offset + float(self.normal @ _vec(v)))

    def __eq__(self, other):
        return isinstance(other, Halfspace) and np.array_equal(self.normal, other.normal) and self.offset == other.offset

    def __repr__(self):
        return f"Halfspace({self.normal.tolist()}, {self.offset})"


class Intersection:
    """Finite intersection, projected with Dykstra's alternating scheme."""

    def __init__(self, bodies: Sequence):
        bodies = list(bodies)
        if not bodies:
            raise DomainError("intersection of no bodies")
        if len({b.dim for b in bodies}) != 1:
            raise DomainError("bodies of an intersection must share a dimension")
        self.bodies = bodies
        # nonemptiness: project the origin and check membership
        self.project(np.zeros(bodies[0].dim))

    @property
    def dim(self):
        return self.bodies[0].dim

    def project(self, x):
        x = _vec(x).copy()
        incs = [np.zeros_like(x) for _ in self.bodies]
        for _ in range(DYKSTRA_MAX_SWEEPS):
            start = x.copy()
            moved = 0.0
            for k, body in enumerate(self.bodies):
                y = body.project(x + incs[k])
                new_inc = x + incs[k] - y
                moved = max(moved, float(np.max(np.abs(new_inc - incs[k]))))
                incs[k] = new_inc
                x = y
            if np.max(np.abs(x - start)) <= DYKSTRA_TOL and moved <= DYKSTRA_TOL:
                break
        if not self.contains(x):
            raise InfeasibleSetError("intersection appears to be empty (Dykstra iterate is infeasible)")
        return x

    def contains(self, x, tol=MEMBERSHIP_TOL):
        return all(b.contains(x, tol) for b in self.bodies)

    def translate(self, v):
        return Intersection([b.translate(v) for b in self.bodies])

    def __eq__(self, other):
        return isinstance(other, Intersection) and len(self.bodies) == len(other.bodies) and all(
            a == b for a, b in zip(self.bodies, other.bodies)
        )

    def __repr__(self):
        return f"Intersection({self.bodies!r})"


def project(body, x):
    """Metric projection of ``x`` onto ``body``."""
    return body.project(x)


def _interval_excess(a_lo, a_hi, b_lo, b_hi):
    """Per-coordinate ``sup_{x in [a_lo,a_hi]} dist(x, [b_lo,b_hi])``."""
    with np.errstate(invalid="ignore"):
        left = np.where(a_lo >= b_lo, 0.0, b_lo - a_lo)
        right = np.where(a_hi <= b_hi, 0.0, a_hi - b_hi)
    return np.maximum(left, right)


def hausdorff(a, b):
    """Hausdorff distance between two bodies of the same closed-form kind."""
    if a.dim != b.dim:
        raise DomainError("bodies live in different dimensions")
    if isinstance(a, Box) and isinstance(b, Box):
        e_ab = np.sqrt(np.sum(_interval_excess(a.lower, a.upper, b.lower, b.upper) ** 2))
        e_ba = np.sqrt(np.sum(_interval_excess(b.lower, b.upper, a.lower, a.upper) ** 2))
        return float(max(e_ab, e_ba))
    if isinstance(a, Ball) and isinstance(b, Ball):
        return float(np.linalg.norm(a.center - b.center) + abs(a.radius - b.radius))
    if isinstance(a, Halfspace) and isinstance(b, Halfspace):
        na, nb = a.normal / math.sqrt(a._nn), b.normal / math.sqrt(b._nn)
        if np.allclose(na, nb, rtol=0, atol=1e-15):
            return abs(a.offset / math.sqrt(a._nn) - b.offset / math.sqrt(b._nn))
        return math.inf
    raise NotImplementedError(f"no closed-form Hausdorff distance for {type(a).__name__}/{type(b).__name__}")


# ---------------------------------------------------------------------------
# operator snapshots


class NormalCone:
    """Normal cone of a convex body; its resolvent is the projection for every ``eta``."""

    def __init__(self, body):
        self.body = body

    @property
    def dim(self):
        return self.body.dim

    def resolvent(self, eta, x):
        return self.body.project(x)

    def min_section(self, x):
        # 0 always belongs to N_C(x) on C, so it is the least-norm element
        if not self.body.contains(x):
            raise DomainError("point is outside the domain of the normal cone")
        return np.zeros(self.dim)

    def contains(self, x, tol=MEMBERSHIP_TOL):
        return self.body.contains(x, tol)

    def __eq__(self, other):
        return isinstance(other, NormalCone) and self.body == other.body


class LinearOperator:
    """Symmetric positive-semidefinite matrix."""

    def __init__(self, matrix, check=True):
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise DomainError("matrix must be square")
        if check:
            if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
                raise DomainError("matrix must be symmetric")
            if np.linalg.eigvalsh(m).min() < -1e-12 * max(1.0, np.abs(m).max()):
                raise DomainError("matrix must be positive semidefinite")
        self.matrix = m

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def norm(self):
        return float(np.linalg.norm(self.matrix, 2))

    def resolvent(self, eta, x):
        try:
            return np.linalg.solve(np.eye(self.dim) + eta * self.matrix, _vec(x))
        except np.linalg.LinAlgError as exc:
            raise OperatorError(f"resolvent system is singular: {exc}") from exc

    def min_section(self, x):
        return self.matrix @ _vec(x)

    def contains(self, x, tol=MEMBERSHIP_TOL):
        return True

    def __eq__(self, other):
        return isinstance(other, LinearOperator) and np.array_equal(self.matrix, other.matrix)


class Prox:
    """Subdifferential of a convex function given by its proximal map.

    ``prox(eta, x)`` must return ``argmin_y g(y) + |y - x|^2 / (2 eta)``.
    """

    def __init__(self, prox: Callable, min_section: Callable | None = None, dim=None):
        self._prox, self._min_section, self._dim = prox, min_section, dim

    @property
    def dim(self):
        return self._dim

    def resolvent(self, eta, x):
        return _vec(self._prox(eta, _vec(x)))

    def min_section(self, x):
        if self._min_section is None:
            raise CapabilityError("this operator has no minimal-section rule")
        return _vec(self._min_section(_vec(x)))

    def contains(self, x, tol=MEMBERSHIP_TOL):
        return True


def soft_threshold(weight=1.0):
    """Prox snapshot of ``weight * |y|_1`` (componentwise soft thresholding)."""

    def prox(eta, x):
        return np.sign(x) * np.maximum(np.abs(x) - eta * weight, 0.0)

    def min_section(x):
        return weight * np.sign(x)

    return Prox(prox, min_section)


# ---------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class MonotoneFamily:
    """Time-dependent operator ``t -> A(t)``.

    ``growth`` is the constant ``c`` with ``|A0(t, x)| <= c (1 + |x|)``; the
    a-priori bounds of the catching-up solver need it.
    """

    snapshot_at: Callable
    growth: float = 0.0
    kind: str = "user"
    domain_test: Callable | None = None

    def snapshot(self, t):
        return self.snapshot_at(t)

    def resolvent(self, t, eta, x):
        if not eta > 0:
            raise DomainError("resolvent step must be positive")
        return self.snapshot_at(t).resolvent(eta, x)

    def min_section(self, t, x):
        snap = self.snapshot_at(t)
        if not hasattr(snap, "min_section"):
            raise CapabilityError("operator has no minimal-section rule")
        return snap.min_section(x)

    def contains(self, t, x, tol=MEMBERSHIP_TOL):
        """Domain membership of ``x`` at ``t``; falls back on ``|J_1 x - x|``."""
        if self.domain_test is not None:
            return bool(self.domain_test(t, x))
        snap = self.snapshot_at(t)
        if hasattr(snap, "contains"):
            return bool(snap.contains(x, tol))
        return bool(np.linalg.norm(snap.resolvent(1.0, x) - _vec(x)) <= tol)


def moving_normal_cone(body_at):
    """Family ``t -> N_{C(t)}``; ``body_at`` may be a callable or a fixed body."""
    if not callable(body_at):
        fixed = NormalCone(body_at)
        return MonotoneFamily(lambda t: fixed, 0.0, "normal-cone",
                              lambda t, x: fixed.contains(x))
    return MonotoneFamily(lambda t: NormalCone(body_at(t)), 0.0, "normal-cone",
                          lambda t, x: body_at(t).contains(x))


def psd_linear(matrix_at, growth=None, horizon=1.0):
    """Family ``t -> A(t)`` of PSD matrices.

    If ``growth`` is omitted it is taken as the operator norm for a constant
    matrix, or the largest norm over 201 sample times of ``[0, horizon]``.
    """
    if not callable(matrix_at):
        fixed = LinearOperator(matrix_at)
        c = fixed.norm if growth is None else float(growth)
        return MonotoneFamily(lambda t: fixed, c, "psd-linear")
    if growth is None:
        growth = max(LinearOperator(matrix_at(t)).norm for t in np.linspace(0, horizon, 201))
    return MonotoneFamily(lambda t: LinearOperator(matrix_at(t)), float(growth), "psd-linear")


def prox_family(prox_at, growth=0.0):
    """Family of prox snapshots; ``prox_at`` maps time to a :class:`Prox`."""
    if not callable(prox_at):
        fixed = prox_at
        return MonotoneFamily(lambda t: fixed, float(growth), "prox")
    return MonotoneFamily(prox_at, float(growth), "prox")


def resolvent(family, t, eta, x):
    """``J_eta^{A(t)}(x)``."""
    return family.resolvent(t, eta, x)


def pseudo_distance(a, b):
    """Closed-form pseudo-distance between two snapshots.

    Equal to the Hausdorff distance of the sets for normal cones. For two
    linear operators it is 0 when they coincide and infinite otherwise.
    """
    if isinstance(a, NormalCone) and isinstance(b, NormalCone):
        return hausdorff(a.body, b.body)
    if isinstance(a, LinearOperator) and isinstance(b, LinearOperator):
        return 0.0 if np.array_equal(a.matrix, b.matrix) else math.inf
    if a is b:
        return 0.0
    raise NotImplementedError(
        "no closed form for this pair of operators; supply the variation function directly"
    )


def vladimirov_dis(family, t, s):
    return pseudo_distance(family.snapshot(t), family.snapshot(s))


def lemma23_bound(a, b, eta, x, t_a=0.0, t_b=0.0):
    """Upper bound for ``|x - J_eta^B(x)|`` at ``x`` in the domain of ``A``.

    ``eta |A0 x| + dis + sqrt(eta (1 + |A0 x|) dis)``; ``a``/``b`` are
    snapshots or families (evaluated at ``t_a``/``t_b``).
    """
    if isinstance(a, MonotoneFamily):
        a = a.snapshot(t_a)
    if isinstance(b, MonotoneFamily):
        b = b.snapshot(t_b)
    if not hasattr(a, "min_section"):
        raise CapabilityError("operator has no minimal-section rule")
    a0 = float(np.linalg.norm(a.min_section(x)))
    dis = pseudo_distance(a, b)
    return eta * a0 + dis + math.sqrt(eta * (1.0 + a0) * dis)


# ---------------------------------------------------------------------------
# state-dependent families


@dataclass(frozen=True)
class StateDependentFamily:
    """``(t, x) -> A_(t, x)`` with Lipschitz modulus ``lipschitz`` in ``x``."""

    rule: Callable
    lipschitz: float = 1.0
    growth: float = 0.0
    kind: str = "user"

    def snapshot(self, t, x):
        return self.rule(t, _vec(x))

    def frozen(self, path):
        """Freeze the state along ``path`` (a callable of time)."""
        return MonotoneFamily(lambda t: self.rule(t, _vec(path(t))), self.growth, self.kind)


def state_interval_family(halfwidth, gain, speed=0.0):
    """1D family ``N_{C(t,x)}``, ``C(t,x) = [c - halfwidth, c + halfwidth]``, ``c = speed t + gain x``."""
    if halfwidth < 0:
        raise DomainError("halfwidth must be nonnegative")

    def rule(t, x):
        c = speed * t + gain * float(x[0])
        return NormalCone(Box([c - halfwidth], [c + halfwidth]))

    return StateDependentFamily(rule, abs(gain), 0.0, "normal-cone")
