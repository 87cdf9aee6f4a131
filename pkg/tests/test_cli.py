import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bvrc.cli import convergence_study, corpus, main, measure_of, run, selftest
from bvrc.scenario import KINDS, Scenario, ScenarioError, parse_scenario, serialize_scenario

CORPUS = dict(corpus())


def load(name):
    return parse_scenario(CORPUS[name])


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), np.array([[float(v) for v in l.split(",")] for l in lines[1:]])


# -- parsing ------------------------------------------------------------------------------


def test_minimal_sweeping_defaults():
    sc = parse_scenario("kind sweeping\nhorizon 1\nset box -1 1\nu0 0\n")
    assert (sc.tol, sc.eps0, sc.factor) == (1e-6, 1e-2, 0.5)
    assert sc.set_body == ("box", -1.0, 1.0)


def test_atom_line_reaches_the_measure():
    sc = parse_scenario("kind sweeping\nhorizon 1\nset box -1 1\nu0 0\natom 0.5 2.0  # jump\n")
    r = measure_of(sc).variation
    assert r.atoms.tolist() == [[0.5, 2.0]]


@pytest.mark.parametrize(
    "text, match",
    [
        ("kind sweeping\nhorizon 1\nset box -1 1\nu0 0\ntol 1e-3\ntol 1e-4\n", "line 6: duplicate key 'tol'"),
        ("kind sweeping\nhorizon 1\nsett box -1 1\n", "line 3: unknown key 'sett'"),
        ("kind sweeping\nhorizon 1\nset box -1 1\n", "u0"),
        ("kind sweeping\nhorizon 1\nset box -1 1\nu0 nan\n", "line 4"),
        ("kind sweeping\nhorizon inf\nset box -1 1\nu0 0\n", "line 2"),
        ("kind warp\n", "unknown kind"),
        ("horizon 1\n", "kind"),
        ("kind sweeping\nset box -1 1\nu0 0\n", "horizon"),
        ("kind sweeping\nhorizon 1\nset box -1\nu0 0\n", "line 3"),
        ("kind lipschitz\nhorizon 1\nset box -1 1\nu0 0\nforcing cubic 1\n", "line 5"),
        ("kind fractional-bvp\nfractional alpha=2\nzeta constant 1\n", "line 2"),
        ("kind sweeping\nhorizon 1\nset box -1 1\nu0 0\nfactor 1.5\n", "line 5"),
        ("kind sweeping\nhorizon 2\nknot 0 0\nknot 1 1\nset box -1 1\nu0 0\n", "horizon"),
    ],
)
def test_parse_errors(text, match):
    with pytest.raises(ScenarioError, match=match):
        parse_scenario(text)


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_corpus_round_trip(name):
    sc = load(name) if not name.startswith("invalid_") else parse_scenario(CORPUS[name])
    assert parse_scenario(serialize_scenario(sc)) == sc


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
positive = st.floats(1e-9, 1e3)


@st.composite
def scenarios(draw):
    kind = draw(st.sampled_from(["sweeping", "lipschitz", "mixed", "skorohod", "second-order"]))
    T = draw(positive)
    mid = draw(st.floats(0.01, 0.99)) * T
    knots = ((0.0, 0.0), (mid, draw(positive)), (T, 2e3))
    atoms = tuple((draw(st.floats(0.01, 1.0)) * T, draw(positive)) for _ in range(draw(st.integers(0, 2))))
    dim = draw(st.integers(1, 3))
    vec = st.tuples(*[finite] * dim)
    lo = draw(vec)
    box = ("box",) + tuple(v for l in lo for v in (l, l + 1.0))
    return Scenario(
        kind=kind,
        horizon=T if draw(st.booleans()) else None,
        knots=knots,
        atoms=atoms,
        set_body=box,
        translate=draw(st.none() | vec),
        switches=((mid, "ball", 1.0) + draw(vec),) if draw(st.booleans()) else (),
        forcing=("linear", draw(finite)) + draw(vec),
        set_forcing=draw(st.none() | st.just(("box", 0.5, 1.0))),
        coupling=(draw(finite), draw(finite)),
        drift=("constant",) + draw(vec),
        u0=draw(vec),
        x0=draw(vec),
        y0=draw(vec),
        tol=draw(positive),
        eps0=draw(positive),
        factor=draw(st.floats(0.01, 0.99)),
        eps=draw(positive),
        max_iters=draw(st.integers(1, 1000)),
        state_gamma=draw(st.floats(0, 10)),
        output=draw(st.none() | st.sampled_from(["traj", "out_1"])),
    )


@given(scenarios())
def test_round_trip_property(sc):
    assert parse_scenario(serialize_scenario(sc)) == sc


def test_every_kind_is_in_the_corpus():
    kinds = {parse_scenario(t).kind for n, t in CORPUS.items()}
    assert kinds == set(KINDS)


# -- running ------------------------------------------------------------------------------


def test_play_run_final_row(tmp_path):
    assert run(load("play.txt"), tmp_path) == 0
    header, rows = read_csv(tmp_path / "trajectory.csv")
    assert header == ["t", "u1"]
    assert rows[-1] == pytest.approx([2.0, 1.0], abs=5e-3)
    summary = (tmp_path / "summary.txt").read_text()
    for key in ("epsilon_levels", "sup_distances", "velocity_bound_K2", "runtime_seconds"):
        assert key in summary
    assert (tmp_path / "history.csv").exists()


def test_skorohod_zero_columns_identical(tmp_path):
    assert run(load("skorohod_zero.txt"), tmp_path) == 0
    header, rows = read_csv(tmp_path / "trajectory.csv")
    assert header == ["t", "X1", "Y1", "h1"]
    np.testing.assert_array_equal(rows[:, 1], rows[:, 2])
    assert (tmp_path / "history.csv").read_text().startswith("iteration,distance\n")


def test_degenerate_fractional_exit_one(tmp_path):
    err = io.StringIO()
    assert run(load("invalid_degenerate_fractional.txt"), tmp_path, stream=err) == 1
    assert "degenerate parameters" in err.getvalue()


def test_nonconvergence_exit_two_writes_artifacts(tmp_path):
    sc = load("skorohod_drift.txt").with_overrides(max_iters=1, tol=1e-12)
    assert run(sc, tmp_path, stream=io.StringIO()) == 2
    assert (tmp_path / "trajectory.csv").exists()
    assert "status not-converged" in (tmp_path / "summary.txt").read_text()
    sc = load("second_order.txt").with_overrides(max_iters=2)
    assert run(sc, tmp_path / "p", stream=io.StringIO()) == 2
    assert len((tmp_path / "p" / "history.csv").read_text().splitlines()) == 3
    assert (tmp_path / "p" / "trajectory.csv").exists()


@pytest.mark.parametrize("name", ["play.txt", "second_order.txt", "fractional_bvp.txt"])
def test_runs_are_byte_identical(tmp_path, name):
    run(load(name), tmp_path / "a")
    run(load(name), tmp_path / "b")
    a = (tmp_path / "a" / "trajectory.csv").read_bytes()
    assert a == (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert b"\r" not in a


def test_fractional_bvp_artifacts(tmp_path):
    assert run(load("fractional_bvp.txt"), tmp_path) == 0
    _, rows = read_csv(tmp_path / "trajectory.csv")
    t = rows[:, 0]
    np.testing.assert_allclose(rows[:, 1], t ** 2 / 2 - 2 * t / 3, atol=1e-12)
    assert len((tmp_path / "green.csv").read_text().splitlines()) == 201 * 201 + 1


# -- convergence study ------------------------------------------------------------------------


def test_study_play_strictly_decreasing():
    rows = convergence_study(load("play.txt"), 5)
    errors = [r[1] for r in rows]
    assert len(errors) == 5
    assert all(b < a for a, b in zip(errors, errors[1:]))


def test_study_constant_set_all_zero():
    assert all(r[1] == 0.0 for r in convergence_study(load("constant_box.txt"), 3))


def test_study_jump_exact_at_atom():
    rows = convergence_study(load("jump.txt"), 3)
    assert rows[2][3] < 1e-9


def test_study_rejects_iterative_kinds():
    with pytest.raises(ScenarioError):
        convergence_study(load("skorohod_zero.txt"), 2)


# -- entry point -------------------------------------------------------------------------------


def test_main_solve_and_study(tmp_path):
    path = tmp_path / "play.txt"
    path.write_text(CORPUS["play.txt"])
    assert main(["solve", str(path), "--tol", "1e-2", "--out", str(tmp_path / "s")]) == 0
    assert "sup_distances" in (tmp_path / "s" / "summary.txt").read_text()
    assert main(["study", str(path), "--levels", "3", "--out", str(tmp_path / "st")]) == 0
    header = (tmp_path / "st" / "study.csv").read_text().splitlines()[0]
    assert header == "epsilon,sup_error,ratio,atom_error"


def test_main_input_errors(tmp_path):
    assert main(["solve", str(tmp_path / "missing.txt")]) == 1
    bad = tmp_path / "bad.txt"
    bad.write_text("kind sweeping\nhorizon 1\nset box -1 1\nu0 0\n")
    assert main(["solve", str(bad), "--factor", "2", "--out", str(tmp_path)]) == 1
    bad.write_text("kind sweeping\nhorizon 1\nset box 0 1\nu0 5\n")
    assert main(["solve", str(bad), "--out", str(tmp_path)]) == 1


def test_selftest_passes():
    out = io.StringIO()
    assert selftest(out) == 0
    assert "selftest: 0 failure(s)" in out.getvalue()
