"""Command line front end: ``bvrc solve``, ``bvrc study``, ``bvrc selftest``."""

from __future__ import annotations

import argparse
from importlib import resources
import io
import math
from pathlib import Path
import sys
import tempfile
import time

import numpy as np

from .applications import (
    BvDriver,
    skorohod_solve,
    skorohod_stieltjes_solve,
    solve_second_order,
    solve_state_dependent,
    solve_sweeping,
)
from .catching_up import march, sup_distance
from .errors import BvrcError, NonConvergenceError
from .fractional import FractionalParams, GreenKernel, solve_fractional_bvp, solve_fractional_coupled
from .measures import MixedMeasure, VariationFunction, build_partition, refine
from .monotone import Ball, Box, moving_normal_cone, psd_linear, state_interval_family
from .perturbations import (
    SetValuedForcing,
    ball_forcing,
    box_forcing,
    constant_forcing,
    linear_forcing,
    solve_lipschitz,
    solve_mixed,
    solve_set_valued,
)
from .scenario import Scenario, ScenarioError, parse_scenario

__all__ = ["run", "convergence_study", "selftest", "main", "corpus"]

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2
CATCHING_UP = ("sweeping", "lipschitz", "set-valued", "mixed")


def _fmt(x):
    return f"{x:.17g}"


def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(float(v)) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# scenario -> solver objects


def measure_of(sc: Scenario) -> MixedMeasure:
    horizon = 1.0 if sc.kind.startswith("fractional") and sc.horizon is None and not sc.knots else sc.horizon
    if horizon is None:
        horizon = sc.knots[-1][0]
    return MixedMeasure(VariationFunction(horizon, sc.knots or None, sc.atoms or None))


def _body(spec):
    kind, vals = spec[0], np.array(spec[1:], dtype=float)
    if kind == "box":
        return Box(vals[0::2], vals[1::2])
    return Ball(vals[1:], vals[0])


def body_at(sc: Scenario):
    """``t -> C(t)``: latest switched body, translated by ``t * v``."""
    base = _body(sc.set_body)
    switches = [(s[0], _body(s[1:])) for s in sorted(sc.switches, key=lambda s: s[0])]
    v = None if sc.translate is None else np.array(sc.translate)

    def at(t):
        body = base
        for tau, b in switches:
            if t >= tau:
                body = b
        return body if v is None else body.translate(t * v)

    return at


def family_of(sc: Scenario, horizon):
    if sc.operator is not None:
        n = int(round(math.sqrt(len(sc.operator))))
        return psd_linear(np.array(sc.operator).reshape(n, n), horizon=horizon)
    return moving_normal_cone(body_at(sc))


def lipschitz_of(sc: Scenario):
    f = sc.forcing
    if f is None or f[0] in ("none", "ball-min-norm"):
        return None
    if f[0] == "constant":
        return constant_forcing(f[1:])
    return linear_forcing(f[1], f[2:])


def set_forcing_of(sc: Scenario, dim) -> SetValuedForcing | None:
    spec = sc.set_forcing
    if spec is None and sc.forcing is not None and sc.forcing[0] == "ball-min-norm":
        spec = ("ball",) + sc.forcing[1:]
    if spec is None:
        return None
    if spec[0] == "box":
        return box_forcing(spec[1::2], spec[2::2])
    center = spec[2:] if len(spec) > 2 else None
    return ball_forcing(spec[1], center, dim)


def coupling_of(sc: Scenario):
    if sc.coupling is None:
        return None
    k, c = sc.coupling

    def f(t, x, u):
        return -k * np.asarray(x) - c * np.asarray(u)

    return f


def drift_of(sc: Scenario):
    d = sc.drift or ("constant", 0.0)
    if d[0] == "constant":
        v = np.array(d[1:])
        return lambda s, x: v
    a, b = d[1], np.array(d[2:])
    return lambda s, x: a * np.asarray(x) + b


def zeta_of(sc: Scenario):
    kind, coef = sc.zeta[0], np.array(sc.zeta[1:])
    if kind == "constant":
        return lambda s: np.multiply.outer(np.ones_like(np.asarray(s, dtype=float)), coef)
    return lambda s: np.polynomial.polynomial.polyval(np.asarray(s, dtype=float), coef)


def _drift_rule(sc: Scenario, dim):
    """Explicit drift ``g(t, x)`` of the catching-up kinds (``None`` if absent)."""
    parts = []
    f = lipschitz_of(sc)
    if f is not None:
        parts.append(f)
    F = set_forcing_of(sc, dim)
    if F is not None:
        parts.append(F.select)
    if not parts:
        return None
    return lambda t, x: sum(np.atleast_1d(p(t, x)) for p in parts)


def level_runner(sc: Scenario):
    """``(run_level, measure)`` for the catching-up kinds."""
    if sc.kind not in CATCHING_UP:
        raise ScenarioError(f"kind '{sc.kind}' has no refinement levels")
    measure = measure_of(sc)
    u0 = np.array(sc.u0)
    family = family_of(sc, measure.horizon)
    rule = _drift_rule(sc, u0.size)

    def forcing(a, b, u):
        return rule(a, u) * (b - a)

    return (lambda P: march(family, P, u0, forcing if rule is not None else None)), measure


def solve_scenario(sc: Scenario):
    """Dispatch to the solver for ``sc.kind``; returns the raw result."""
    if sc.kind == "fractional-bvp":
        params = FractionalParams(*sc.fractional)
        return solve_fractional_bvp(zeta_of(sc), GreenKernel(params))
    measure = measure_of(sc)
    T = measure.horizon
    if sc.kind == "sweeping":
        return solve_sweeping(body_at(sc), measure, sc.u0, lipschitz_of(sc), sc.tol, sc.eps0, sc.factor)
    family = None if sc.kind == "state-dependent" else family_of(sc, T)
    if sc.kind == "lipschitz":
        return solve_lipschitz(family, lipschitz_of(sc), sc.u0, measure, sc.tol, sc.eps0, sc.factor)
    if sc.kind == "set-valued":
        return solve_set_valued(family, set_forcing_of(sc, len(sc.u0)), sc.u0, measure, sc.tol, sc.eps0,
                                sc.factor)
    if sc.kind == "mixed":
        return solve_mixed(family, lipschitz_of(sc), set_forcing_of(sc, len(sc.u0)), sc.u0, measure, sc.tol,
                           sc.eps0, sc.factor)
    if sc.kind == "skorohod":
        return skorohod_solve(family, drift_of(sc), sc.y0, measure, sc.tol, sc.eps, sc.max_iters)
    if sc.kind == "skorohod-stieltjes":
        driver = BvDriver([d[0] for d in sc.driver], [d[1:] for d in sc.driver])
        return skorohod_stieltjes_solve(family, drift_of(sc), driver, sc.y0, measure, sc.tol, sc.eps,
                                        sc.max_iters)
    if sc.kind == "second-order":
        return solve_second_order(family, coupling_of(sc), sc.x0, sc.u0, measure, sc.tol, sc.eps, sc.max_iters)
    if sc.kind == "state-dependent":
        sf = state_interval_family(*sc.state_set[1:])
        return solve_state_dependent(sf, coupling_of(sc), sc.x0, sc.u0, measure.variation, sc.state_gamma,
                                     sc.tol, sc.eps, sc.max_iters)
    params = FractionalParams(*sc.fractional)
    return solve_fractional_coupled(family, coupling_of(sc), sc.u0, GreenKernel(params), measure, sc.tol,
                                    sc.eps, sc.max_iters)


# ---------------------------------------------------------------------------
# artifacts


def _cols(prefix, d):
    return [f"{prefix}{k + 1}" for k in range(d)]


def _write_result(sc: Scenario, result, out: Path):
    """Write CSV + history for a (possibly partial) result; returns summary lines."""
    name = sc.output or "trajectory"
    lines = []
    kind = sc.kind
    if kind in CATCHING_UP:
        report = result
        traj = report.trajectory
        _write_csv(out / f"{name}.csv", ["t"] + _cols("u", traj.dim),
                   np.column_stack((traj.nodes, traj.values)))
        _write_csv(out / "history.csv", ["level", "epsilon", "sup_distance"],
                   [(k + 1, e, d) for k, (e, d) in enumerate(zip(report.epsilon_sequence[1:], report.sup_distances))])
        lines.append("epsilon_levels " + " ".join(_fmt(e) for e in report.epsilon_sequence))
        lines.append("sup_distances " + " ".join(_fmt(d) for d in report.sup_distances))
        lines.append(f"state_bound_K1 {_fmt(traj.k1)}")
        lines.append(f"velocity_bound_K2 {_fmt(traj.k2)}")
        return lines
    if kind == "fractional-bvp":
        ts = np.linspace(0.0, 1.0, 101)
        u = np.asarray(result(ts), dtype=float).reshape(len(ts), -1)
        _write_csv(out / f"{name}.csv", ["t"] + _cols("u", u.shape[1]), np.column_stack((ts, u)))
        (out / "green.csv").write_text(result.kernel.grid_csv(), encoding="utf-8", newline="\n")
        lines.append(f"mu0 {_fmt(result.kernel.mu0)}")
        lines.append(f"green_bound_MG {_fmt(result.kernel.m_g)}")
        lines.append(f"quadrature_subdivision {result.n_sub}")
        return lines
    if kind.startswith("skorohod"):
        if isinstance(result, tuple):
            h, Y = result
            X_vals = h(Y.nodes) + Y.values
        else:
            h, Y, X_vals = result.h, result.Y, result.X.values
        d = Y.dim
        _write_csv(out / f"{name}.csv", ["t"] + _cols("X", d) + _cols("Y", d) + _cols("h", d),
                   np.column_stack((Y.nodes, X_vals, Y.values, h(Y.nodes))))
        k1, k2 = Y.k1, Y.k2
    else:
        if isinstance(result, tuple):
            x, u = result
        else:
            x, u = result.x, result.u
        nodes = u.nodes
        xv = x if isinstance(x, np.ndarray) else x(nodes)
        xv = np.asarray(xv, dtype=float).reshape(len(nodes), -1)
        _write_csv(out / f"{name}.csv", ["t"] + _cols("x", xv.shape[1]) + _cols("u", u.dim),
                   np.column_stack((nodes, xv, u.values)))
        k1, k2 = u.k1, u.k2
    lines.append(f"epsilon {_fmt(sc.eps)}")
    lines.append(f"state_bound_K1 {_fmt(k1)}")
    lines.append(f"velocity_bound_K2 {_fmt(k2)}")
    return lines


def _write_history(out: Path, history):
    _write_csv(out / "history.csv", ["iteration", "distance"], [(k + 1, d) for k, d in enumerate(history)])


def run(sc: Scenario, out_dir, stream=None):
    """Solve ``sc`` and write artifacts into ``out_dir``; returns the exit code."""
    stream = sys.stderr if stream is None else stream
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    status, extra, history = "converged", [], []
    try:
        result = solve_scenario(sc)
        code = EXIT_OK
    except NonConvergenceError as exc:
        result, code, status = exc.partial, EXIT_NONCONVERGED, "not-converged"
        history = exc.history
        extra.append(f"message {exc}")
        print(f"bvrc: {exc}", file=stream)
    except (BvrcError, ValueError) as exc:
        print(f"bvrc: input error: {exc}", file=stream)
        return EXIT_INPUT
    lines = [f"kind {sc.kind}", f"status {status}"]
    if result is not None:
        lines += _write_result(sc, result, out)
    if hasattr(result, "iterations"):
        lines.append(f"iterations {result.iterations}")
        _write_history(out, result.history)
    elif code == EXIT_NONCONVERGED and sc.kind not in CATCHING_UP:
        _write_history(out, history)
    lines += extra
    lines.append(f"runtime_seconds {time.perf_counter() - start:.3f}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return code


# ---------------------------------------------------------------------------
# convergence study


def convergence_study(sc: Scenario, levels: int):
    """Rows ``(epsilon, sup_error, ratio, atom_error)`` against the finest level.

    Levels ``eps0 * factor^k`` for ``k = 0..levels``; the last one is the
    reference, so ``levels`` rows are returned.
    """
    if levels < 1:
        raise ScenarioError("levels must be at least 1")
    run_level, measure = level_runner(sc)
    part = build_partition(measure, sc.eps0)
    trajs = [run_level(part)]
    for _ in range(levels):
        part = refine(part, sc.factor)
        trajs.append(run_level(part))
    ref = trajs[-1]
    atoms = measure.variation.atoms[:, 0]
    rows = []
    for k, tr in enumerate(trajs[:-1]):
        err = sup_distance(tr, ref)
        ratio = err / rows[-1][1] if rows and rows[-1][1] > 0 else math.nan
        atom_err = (float(np.max(np.linalg.norm(tr.evaluate(atoms) - ref.evaluate(atoms), axis=1)))
                    if len(atoms) else 0.0)
        rows.append((tr.partition.epsilon, err, ratio, atom_err))
    return rows


def write_study(rows, path):
    _write_csv(Path(path), ["epsilon", "sup_error", "ratio", "atom_error"], rows)


# ---------------------------------------------------------------------------
# self test


def corpus():
    """``(name, text)`` for every bundled scenario, sorted by name."""
    root = resources.files("bvrc") / "scenarios"
    items = [(p.name, p.read_text(encoding="utf-8")) for p in root.iterdir() if p.name.endswith(".txt")]
    return sorted(items)


def _invariant_checks(rng):
    """Quick randomized invariants: resolvent nonexpansiveness and a Gronwall case."""
    from .gronwall import discrete_bound

    for _ in range(200):
        lo = rng.uniform(-2, 0, 2)
        fam = moving_normal_cone(Box(lo, lo + rng.uniform(0, 2, 2)))
        x, y = rng.normal(0, 3, (2, 2))
        eta = rng.uniform(1e-3, 10)
        jx, jy = fam.resolvent(0.0, eta, x), fam.resolvent(0.0, eta, y)
        if np.linalg.norm(jx - jy) > np.linalg.norm(x - y) + 1e-10:
            return "resolvent nonexpansiveness"
    for _ in range(200):
        n = 6
        al, be, ga = rng.uniform(0, 1, (3, n))
        a = [rng.uniform(0, 1)]
        for i in range(n - 1):
            a.append(al[i] + be[i] * sum(a[:i]) + (1 + ga[i]) * a[i])
        if a[-1] > discrete_bound(a[0], al, be, ga, n - 1) + 1e-10:
            return "discrete Gronwall"
    return None


def selftest(stream=None):
    """Run every bundled scenario (each solve asserts the a-priori bounds) and
    the quick invariant checks; returns the exit code."""
    stream = sys.stdout if stream is None else stream
    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        for name, text in corpus():
            expect = EXIT_INPUT if name.startswith("invalid_") else EXIT_OK
            t0 = time.perf_counter()
            try:
                code = run(parse_scenario(text), Path(tmp) / name[:-4], stream=io.StringIO())
            except ScenarioError:
                code = EXIT_INPUT
            ok = code == expect
            failures += not ok
            print(f"{'PASS' if ok else 'FAIL'} {name} exit={code} ({time.perf_counter() - t0:.2f}s)", file=stream)
    bad = _invariant_checks(np.random.default_rng(0))
    failures += bad is not None
    print(f"{'PASS' if bad is None else 'FAIL'} invariants{'' if bad is None else ': ' + bad}", file=stream)
    print(f"selftest: {failures} failure(s)", file=stream)
    return EXIT_OK if failures == 0 else EXIT_INPUT


# ---------------------------------------------------------------------------
# entry point


def _load(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from None
    return parse_scenario(text)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="bvrc", description="Catching-up solvers for measure-driven inclusions.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="solve a scenario file")
    p.add_argument("file")
    p.add_argument("--tol", type=float)
    p.add_argument("--eps0", type=float)
    p.add_argument("--factor", type=float)
    p.add_argument("--out", default=".")
    p = sub.add_parser("study", help="convergence table over refinement levels")
    p.add_argument("file")
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--out", default=".")
    sub.add_parser("selftest", help="run the bundled scenario corpus and invariant checks")
    args = ap.parse_args(argv)

    if args.command == "selftest":
        return selftest()
    try:
        sc = _load(args.file)
        if args.command == "solve":
            sc = sc.with_overrides(tol=args.tol, eps0=args.eps0, factor=args.factor)
            if not (sc.tol > 0 and sc.eps0 > 0 and 0 < sc.factor < 1):
                raise ScenarioError("tol and eps0 must be positive and factor must lie in (0, 1)")
            return run(sc, args.out)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = convergence_study(sc, args.levels)
        write_study(rows, out / "study.csv")
        for row in rows:
            print(",".join(_fmt(v) for v in row))
        return EXIT_OK
    except (BvrcError, ValueError) as exc:
        print(f"bvrc: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
