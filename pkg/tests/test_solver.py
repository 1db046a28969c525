import math
import time

import numpy as np
import pytest

from formcy import forms, geometry, presets
from formcy import operator as op
from formcy import solver as sv
from formcy.diagnostics import manufacture
from formcy.grid import TorusGrid

from conftest import random_metric


@pytest.fixture(scope="module")
def grid2():
    return TorusGrid.uniform(3, 8, active=(0, 1))


@pytest.fixture(scope="module")
def pctx(grid2):
    alpha = presets.load_background("perturbed-admissible", grid2)
    return op.build_context(alpha, presets.omega0_field("kahler", grid2), h=0.0, A=0.01)


@pytest.fixture(scope="module")
def manufactured_1d():
    """Manufactured problem on a single active coordinate with 16 points per direction."""
    g = TorusGrid.uniform(3, 16, active=(0,))
    alpha = geometry.admissible_background(g, seed=3)
    ctx = op.build_context(alpha, h=0.0, A=0.01)
    phi_star = presets.phi_star_modes(g, 0.3)
    m = manufacture(ctx, phi_star)
    ctx = ctx.with_data(h=m.h)
    exact = g.resolve(phi_star) + math.log(ctx.A / m.A)
    return ctx, exact, m


def test_config_validation():
    with pytest.raises(ValueError):
        sv.SolverConfig(A=0.0)
    with pytest.raises(ValueError):
        sv.SolverConfig(t_step=1e-5)
    with pytest.raises(ValueError):
        sv.SolverConfig(tol=-1.0)
    with pytest.raises(ValueError):
        sv.SolverConfig(shrink=1.0)
    with pytest.raises(ValueError):
        sv.SolverConfig(max_newton=0)


def test_t0_residual_vanishes(pctx):
    c0 = pctx.at(0.0)
    phi = np.full(pctx.grid.shape, math.log(pctx.A))
    assert np.max(np.abs(sv.residual(c0, phi, 0.0, collocation=True))) <= 1e-13
    state = sv.initial_state(pctx)
    assert state.residual_sup <= 1e-13
    assert abs(state.mass - pctx.A) / pctx.A <= 1e-12


def test_manufactured_residual_zero(manufactured_1d):
    ctx, exact, m = manufactured_1d
    assert m.residual_sup <= 1e-12
    assert np.max(np.abs(sv.residual(ctx.at(1.0), exact, 0.0))) <= 1e-12


def test_residual_determinant_oracle(pctx, grid2):
    ctx = pctx.at(0.7)
    phi = grid2.resolve(0.2 * np.cos(grid2.coordinates()[0]) + math.log(ctx.A))
    wt = op.assemble_omega_tilde(ctx, phi)
    ratio = np.log(np.linalg.det(wt).real / np.linalg.det(ctx.alpha).real)
    ref = ratio - (ctx.n - 1) * (0.7 * ctx.h + 0.3 * ctx.h0 + 0.1)
    np.testing.assert_allclose(sv.residual(ctx, phi, 0.1, collocation=True), ref, atol=1e-12)
    np.testing.assert_allclose(sv.residual(ctx, phi, 0.1), grid2.resolve(ref), atol=1e-12)


def test_projection_is_exact(pctx, grid2):
    phi = np.sin(grid2.coordinates()[1])
    p = sv.project(pctx, phi)
    assert abs(sv.mass(pctx, p) - pctx.A) / pctx.A <= 1e-14
    assert np.ptp(p - phi) <= 1e-14


def test_newton_step_zero_residual(pctx):
    state = sv.initial_state(pctx)
    c0 = pctx.at(0.0)
    new, info = sv.newton_step(c0, state, sv.SolverConfig())
    assert info == {"step": 0.0, "psi_sup": 0.0, "db": 0.0}
    assert new.phi is state.phi and new.b == state.b


def test_newton_step_constant_residual():
    g = TorusGrid.uniform(3, 8, active=(0, 1))
    ctx = op.build_context(geometry.constant_metric(g), A=0.01).at(0.0)
    phi = np.full(g.shape, math.log(0.01))
    b0 = 0.25  # residual r = -(n-1) b0, constant
    st = sv.SolutionState(phi, b0, 0.0, 0.5, 1.0)
    new, info = sv.newton_step(ctx, st, sv.SolverConfig())
    assert info["step"] == 1.0
    assert info["psi_sup"] <= 1e-12
    assert info["db"] == pytest.approx(-b0, abs=1e-12)  # db = -r/(n-1)
    assert abs(new.b) <= 1e-12 and new.residual_sup <= 1e-12


def test_flat_march_constants():
    g = TorusGrid.uniform(3, 8, active=(0,))
    ctx = op.build_context(geometry.constant_metric(g), h=0.0)
    cfg = sv.SolverConfig(A=0.05)
    state, trace = sv.continuity_march(ctx, cfg)
    assert state.t == 1.0
    np.testing.assert_allclose(state.phi, math.log(0.05), atol=1e-12)
    assert abs(state.b) <= 1e-12
    for rec in trace:
        assert rec["residual_sup"] <= 1e-12 and abs(rec["b"]) <= 1e-12
        assert rec["mass_rel_error"] <= 1e-12


def test_manufactured_recovery(manufactured_1d):
    ctx, exact, _ = manufactured_1d
    t0 = time.perf_counter()
    state, trace = sv.continuity_march(ctx, sv.SolverConfig(A=ctx.A))
    assert time.perf_counter() - t0 < 120
    assert np.max(np.abs(state.phi - exact)) <= 1e-8
    assert abs(state.b) <= 1e-8
    assert state.residual_sup <= 1e-10
    assert all(r["mass_rel_error"] <= 1e-12 for r in trace)
    assert all(r["margin"] > 0 for r in trace)
    assert [r["t"] for r in trace][-1] == 1.0
    ts = [r["t"] for r in trace]
    assert ts == sorted(ts)


def test_newton_quadratic_convergence(manufactured_1d):
    ctx, exact, _ = manufactured_1d
    c1 = ctx.at(1.0)
    g = ctx.grid
    start = sv.SolutionState(sv.project(c1, exact + 0.02 * g.resolve(np.cos(2 * g.coordinates()[1]))), 0.01, 1.0, 1.0, 1.0)
    log = []
    sv.newton_solve(c1, start, sv.SolverConfig(tol=1e-13, max_newton=20), log=log)
    res = [r["residual_sup"] for r in log]
    assert len(res) >= 3
    # quadratic decay while far above round-off
    ratios = [b / a**2 for a, b in zip(res, res[1:]) if b > 1e-11]
    assert ratios and max(ratios) < 1e3


def test_b_bounds_along_march(pctx):
    h = -np.linalg.slogdet(pctx.alpha)[1]
    ctx = pctx.with_data(h=h)
    _, trace = sv.continuity_march(ctx, sv.SolverConfig(A=0.01))
    for r in trace:
        assert r["b_lower"] - 1e-10 <= r["b"] <= r["b_upper"] + 1e-10


def test_a0_rule(pctx):
    assert math.isinf(sv.a0_rule(pctx, 1.0, 0.1))


def test_recover_metric_examples(rng):
    I3 = np.eye(3)
    np.testing.assert_allclose(sv.recover_metric(I3, I3), I3, atol=1e-14)
    np.testing.assert_allclose(sv.recover_metric(np.diag([6.0, 3.0, 2.0]), I3), np.diag([1.0, 2.0, 3.0]), atol=1e-13)
    with pytest.raises(op.DomainError):
        sv.recover_metric(-I3, I3)
    for n in (3, 4):
        a = random_metric(rng, n, (20,))
        wt = random_metric(rng, n, (20,))
        w = sv.recover_metric(wt, a)
        assert np.min(np.linalg.eigvalsh(w)) > 0
        back = forms.star_to_hermitian(forms.power(forms.from_hermitian(w), n - 1), a) / math.factorial(n - 1)
        assert np.max(np.abs(back - wt)) <= 1e-9 * np.max(np.abs(wt))


def test_background_screen_in_march(grid2):
    bad = geometry.random_metric(grid2, 0)
    ctx = op.build_context(bad)
    with pytest.raises(sv.SolverError):
        sv.continuity_march(ctx, sv.SolverConfig())


def test_march_failure_carries_trace(manufactured_1d):
    ctx, _, _ = manufactured_1d
    cfg = sv.SolverConfig(A=ctx.A, t_step=1.0, t_step_min=0.5, max_newton=1, tol=1e-14)
    with pytest.raises(sv.MarchFailure) as err:
        sv.continuity_march(ctx, cfg)
    assert len(err.value.trace) >= 1 and err.value.state is not None


def test_uniqueness_probe(manufactured_1d):
    ctx, exact, _ = manufactured_1d
    rep = sv.uniqueness_probe(ctx, sv.SolverConfig(A=ctx.A), seeds=(None, 4))
    assert rep["complete"]
    assert rep["phi_diff"] <= 1e-8 and rep["b_diff"] <= 1e-8
    same = sv.uniqueness_probe(ctx, sv.SolverConfig(A=ctx.A), seeds=(5, 5))
    np.testing.assert_array_equal(same["states"][0].phi, same["states"][1].phi)
    assert same["b_diff"] == 0.0
