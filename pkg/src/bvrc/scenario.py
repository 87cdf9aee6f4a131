"""Line-oriented scenario files and their translation into solver calls.

One directive per line, ``#`` starts a comment::

    kind sweeping
    horizon 2
    set box -1 1          # lower upper per coordinate
    translate 1           # C(t) = C0 + t * v
    knot 0 0
    knot 2 2
    u0 0
    tol 1e-3
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import math

from .errors import DomainError

__all__ = ["Scenario", "ScenarioError", "parse_scenario", "serialize_scenario", "KINDS"]

KINDS = (
    "sweeping",
    "lipschitz",
    "set-valued",
    "mixed",
    "skorohod",
    "skorohod-stieltjes",
    "second-order",
    "state-dependent",
    "fractional-bvp",
    "fractional-coupled",
)


class ScenarioError(DomainError):
    """Syntax or semantic error in a scenario file."""


@dataclass(frozen=True)
class Scenario:
    kind: str
    horizon: float | None = None
    knots: tuple = ()
    atoms: tuple = ()
    set_body: tuple | None = None
    translate: tuple | None = None
    switches: tuple = ()
    operator: tuple | None = None
    state_set: tuple | None = None
    forcing: tuple | None = None
    set_forcing: tuple | None = None
    coupling: tuple | None = None
    drift: tuple | None = None
    driver: tuple = ()
    fractional: tuple | None = None
    zeta: tuple | None = None
    u0: tuple | None = None
    x0: tuple | None = None
    y0: tuple | None = None
    tol: float = 1e-6
    eps0: float = 1e-2
    factor: float = 0.5
    eps: float = 1e-3
    max_iters: int = 100
    state_gamma: float = 0.0
    output: str | None = None

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


# keys that may appear once; value parser name
_SINGLE = {
    "kind": "word",
    "horizon": "pos",
    "set": "body",
    "translate": "vec",
    "operator": "psd",
    "state-set": "state",
    "forcing": "forcing",
    "setforcing": "setforcing",
    "coupling": "coupling",
    "drift": "drift",
    "fractional": "fractional",
    "zeta": "zeta",
    "u0": "vec",
    "x0": "vec",
    "y0": "vec",
    "tol": "pos",
    "eps0": "pos",
    "factor": "ratio",
    "eps": "pos",
    "max_iters": "int",
    "state-gamma": "nonneg",
    "output": "word",
}
_REPEAT = {"knot", "atom", "switch", "driver"}
_FIELD = {"state-set": "state_set", "setforcing": "set_forcing", "state-gamma": "state_gamma", "set": "set_body"}


def _num(tok, lineno, allow_inf=False):
    try:
        v = float(tok)
    except ValueError:
        raise ScenarioError(f"line {lineno}: '{tok}' is not a decimal number") from None
    if math.isnan(v) or (math.isinf(v) and not allow_inf):
        raise ScenarioError(f"line {lineno}: '{tok}' is not a finite decimal")
    return v


def _nums(toks, lineno, allow_inf=False):
    return tuple(_num(t, lineno, allow_inf) for t in toks)


def _body(toks, lineno):
    if not toks:
        raise ScenarioError(f"line {lineno}: body kind missing (box or ball)")
    kind, rest = toks[0], toks[1:]
    if kind == "box":
        vals = _nums(rest, lineno, allow_inf=True)
        if not vals or len(vals) % 2:
            raise ScenarioError(f"line {lineno}: box needs lower/upper pairs")
        return ("box",) + vals
    if kind == "ball":
        vals = _nums(rest, lineno)
        if len(vals) < 2 or vals[0] < 0:
            raise ScenarioError(f"line {lineno}: ball needs a radius >= 0 and a center")
        return ("ball",) + vals
    raise ScenarioError(f"line {lineno}: unknown body kind '{kind}'")


def _parse_value(kind, toks, lineno):
    if kind == "word":
        if len(toks) != 1:
            raise ScenarioError(f"line {lineno}: expected one word")
        return toks[0]
    if kind in ("pos", "nonneg", "ratio", "int"):
        if len(toks) != 1:
            raise ScenarioError(f"line {lineno}: expected one number")
        if kind == "int":
            try:
                v = int(toks[0])
            except ValueError:
                raise ScenarioError(f"line {lineno}: '{toks[0]}' is not an integer") from None
            if v < 1:
                raise ScenarioError(f"line {lineno}: must be a positive integer")
            return v
        v = _num(toks[0], lineno)
        if kind == "pos" and not v > 0:
            raise ScenarioError(f"line {lineno}: must be positive")
        if kind == "nonneg" and v < 0:
            raise ScenarioError(f"line {lineno}: must be nonnegative")
        if kind == "ratio" and not 0 < v < 1:
            raise ScenarioError(f"line {lineno}: must lie in (0, 1)")
        return v
    if kind == "vec":
        if not toks:
            raise ScenarioError(f"line {lineno}: expected a vector")
        return _nums(toks, lineno)
    if kind == "body":
        return _body(toks, lineno)
    if kind == "psd":
        if not toks or toks[0] != "psd":
            raise ScenarioError(f"line {lineno}: only 'operator psd <row-major entries>' is supported")
        vals = _nums(toks[1:], lineno)
        n = int(round(math.sqrt(len(vals))))
        if n == 0 or n * n != len(vals):
            raise ScenarioError(f"line {lineno}: psd matrix needs n*n entries")
        return vals
    if kind == "state":
        if len(toks) not in (3, 4) or toks[0] != "interval":
            raise ScenarioError(f"line {lineno}: expected 'state-set interval <halfwidth> <gain> [speed]'")
        return ("interval",) + _nums(toks[1:], lineno)
    if kind == "forcing":
        if not toks:
            raise ScenarioError(f"line {lineno}: forcing preset missing")
        name, rest = toks[0], _nums(toks[1:], lineno)
        if name == "none" and not rest:
            return ("none",)
        if name == "constant" and rest:
            return ("constant",) + rest
        if name == "linear" and len(rest) >= 2:
            return ("linear",) + rest
        if name == "ball-min-norm" and len(rest) >= 1 and rest[0] >= 0:
            return ("ball-min-norm",) + rest
        raise ScenarioError(f"line {lineno}: unknown or malformed forcing preset '{' '.join(toks)}'")
    if kind == "setforcing":
        return _body(toks, lineno)
    if kind == "coupling":
        if len(toks) != 4 or toks[0] != "spring" or toks[2] != "damping":
            raise ScenarioError(f"line {lineno}: expected 'coupling spring <k> damping <c>'")
        return (_num(toks[1], lineno), _num(toks[3], lineno))
    if kind == "drift":
        if not toks or toks[0] not in ("constant", "linear"):
            raise ScenarioError(f"line {lineno}: drift presets are constant, linear")
        rest = _nums(toks[1:], lineno)
        if not rest or (toks[0] == "linear" and len(rest) < 2):
            raise ScenarioError(f"line {lineno}: drift preset needs coefficients")
        return (toks[0],) + rest
    if kind == "fractional":
        vals = {}
        for tok in toks:
            k, sep, v = tok.partition("=")
            if not sep or k not in ("alpha", "gamma", "kappa", "beta") or k in vals:
                raise ScenarioError(f"line {lineno}: expected alpha= gamma= kappa= beta=")
            vals[k] = _num(v, lineno)
        if "alpha" not in vals or "gamma" not in vals:
            raise ScenarioError(f"line {lineno}: fractional needs alpha= and gamma=")
        return (vals["alpha"], vals["gamma"], vals.get("kappa", 0.0), vals.get("beta", 0.0))
    if kind == "zeta":
        if not toks or toks[0] not in ("constant", "poly"):
            raise ScenarioError(f"line {lineno}: zeta presets are constant, poly")
        rest = _nums(toks[1:], lineno)
        if not rest:
            raise ScenarioError(f"line {lineno}: zeta needs coefficients")
        return (toks[0],) + rest
    raise AssertionError(kind)


_REQUIRED = {
    "sweeping": (("set_body",), ("u0",)),
    "lipschitz": (("set_body", "operator"), ("u0",), ("forcing",)),
    "set-valued": (("set_body", "operator"), ("u0",), ("set_forcing",)),
    "mixed": (("set_body", "operator"), ("u0",)),
    "skorohod": (("set_body", "operator"), ("y0",)),
    "skorohod-stieltjes": (("set_body", "operator"), ("y0",), ("driver",)),
    "second-order": (("set_body", "operator"), ("x0",), ("u0",)),
    "state-dependent": (("state_set",), ("x0",), ("u0",)),
    "fractional-bvp": (("fractional",), ("zeta",)),
    "fractional-coupled": (("fractional",), ("set_body", "operator"), ("u0",)),
}


def parse_scenario(text: str) -> Scenario:
    """Parse scenario text; errors name the offending line or field."""
    single: dict = {}
    seen_line: dict = {}
    rep = {k: [] for k in _REPEAT}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *toks = line.split()
        if key in _REPEAT:
            if key in ("knot", "atom"):
                if len(toks) != 2:
                    raise ScenarioError(f"line {lineno}: expected '{key} <t> <value>'")
                rep[key].append(_nums(toks, lineno))
            elif key == "switch":
                if len(toks) < 2:
                    raise ScenarioError(f"line {lineno}: expected 'switch <t> box|ball ...'")
                rep[key].append((_num(toks[0], lineno),) + _body(toks[1:], lineno))
            else:
                if len(toks) < 3 or toks[0] != "knot":
                    raise ScenarioError(f"line {lineno}: expected 'driver knot <t> <values...>'")
                rep[key].append(_nums(toks[1:], lineno))
            continue
        if key not in _SINGLE:
            raise ScenarioError(f"line {lineno}: unknown key '{key}'")
        if key in single:
            raise ScenarioError(f"line {lineno}: duplicate key '{key}' (first given on line {seen_line[key]})")
        single[key] = _parse_value(_SINGLE[key], toks, lineno)
        seen_line[key] = lineno

    if "kind" not in single:
        raise ScenarioError("missing field 'kind'")
    if single["kind"] not in KINDS:
        raise ScenarioError(f"line {seen_line['kind']}: unknown kind '{single['kind']}'")
    kw = {_FIELD.get(k, k): v for k, v in single.items()}
    kw["knots"] = tuple(rep["knot"])
    kw["atoms"] = tuple(rep["atom"])
    kw["switches"] = tuple(rep["switch"])
    kw["driver"] = tuple(rep["driver"])
    sc = Scenario(**kw)
    validate(sc)
    return sc


def validate(sc: Scenario):
    for group in _REQUIRED[sc.kind]:
        if all(getattr(sc, name) in (None, ()) for name in group):
            names = " or ".join(n.replace("_", "-") for n in group)
            raise ScenarioError(f"kind '{sc.kind}' requires the field {names}")
    if sc.horizon is None and not sc.knots and not sc.kind.startswith("fractional"):
        raise ScenarioError("missing field 'horizon' (or knots ending at the horizon)")
    if sc.horizon is not None and sc.knots and sc.knots[-1][0] != sc.horizon:
        raise ScenarioError("last knot must sit at the horizon")


def serialize_scenario(sc: Scenario) -> str:
    """Inverse of :func:`parse_scenario` (exact float round trip)."""

    def nums(vals):
        return " ".join(repr(float(v)) for v in vals)

    out = [f"kind {sc.kind}"]
    if sc.horizon is not None:
        out.append(f"horizon {sc.horizon!r}")
    out += [f"knot {nums(k)}" for k in sc.knots]
    out += [f"atom {nums(a)}" for a in sc.atoms]
    if sc.set_body is not None:
        out.append(f"set {sc.set_body[0]} {nums(sc.set_body[1:])}")
    if sc.translate is not None:
        out.append(f"translate {nums(sc.translate)}")
    out += [f"switch {s[0]!r} {s[1]} {nums(s[2:])}" for s in sc.switches]
    if sc.operator is not None:
        out.append(f"operator psd {nums(sc.operator)}")
    if sc.state_set is not None:
        out.append(f"state-set interval {nums(sc.state_set[1:])}")
    if sc.forcing is not None:
        out.append(f"forcing {sc.forcing[0]} {nums(sc.forcing[1:])}".rstrip())
    if sc.set_forcing is not None:
        out.append(f"setforcing {sc.set_forcing[0]} {nums(sc.set_forcing[1:])}")
    if sc.coupling is not None:
        out.append(f"coupling spring {sc.coupling[0]!r} damping {sc.coupling[1]!r}")
    if sc.drift is not None:
        out.append(f"drift {sc.drift[0]} {nums(sc.drift[1:])}")
    out += [f"driver knot {nums(d)}" for d in sc.driver]
    if sc.fractional is not None:
        a, g, k, b = sc.fractional
        out.append(f"fractional alpha={a!r} gamma={g!r} kappa={k!r} beta={b!r}")
    if sc.zeta is not None:
        out.append(f"zeta {sc.zeta[0]} {nums(sc.zeta[1:])}")
    for name in ("u0", "x0", "y0"):
        v = getattr(sc, name)
        if v is not None:
            out.append(f"{name} {nums(v)}")
    out.append(f"tol {sc.tol!r}")
    out.append(f"eps0 {sc.eps0!r}")
    out.append(f"factor {sc.factor!r}")
    out.append(f"eps {sc.eps!r}")
    out.append(f"max_iters {sc.max_iters}")
    out.append(f"state-gamma {sc.state_gamma!r}")
    if sc.output is not None:
        out.append(f"output {sc.output}")
    return "\n".join(out) + "\n"
