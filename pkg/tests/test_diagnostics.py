import math

import numpy as np
import pytest

from formcy import diagnostics as dg
from formcy import geometry, presets
from formcy import operator as op
from formcy import solver as sv
from formcy.grid import TorusGrid


@pytest.fixture(scope="module")
def grid2():
    return TorusGrid.uniform(3, 8, active=(0, 1))


@pytest.fixture(scope="module")
def flat(grid2):
    return op.build_context(geometry.constant_metric(grid2))


@pytest.fixture(scope="module")
def perturbed(grid2):
    alpha = presets.load_background("perturbed-admissible", grid2)
    return op.build_context(alpha, presets.omega0_field("kahler", grid2))


def test_manufacture_constant(flat, grid2):
    m = dg.manufacture(flat, np.full(grid2.shape, 0.4))
    np.testing.assert_allclose(m.h, m.h.flat[0], atol=1e-14)
    assert m.A == pytest.approx(math.exp(0.4), rel=1e-14)
    assert m.residual_sup <= 1e-12


def test_manufacture_single_mode(flat, grid2):
    phi = 0.05 * np.cos(grid2.coordinates()[0])
    m = dg.manufacture(flat, phi)
    assert m.residual_sup <= 1e-12
    assert np.ptp(m.h) > 1e-4


def test_manufacture_rejects_large_amplitude(flat, grid2):
    with pytest.raises(dg.Inadmissible) as err:
        dg.manufacture(flat, 10 * np.cos(grid2.coordinates()[0]))
    assert err.value.min_eigenvalue < 0
    assert len(err.value.location) == grid2.ndim


def test_infimum_and_l1(flat):
    A = 0.02
    st = sv.SolutionState(np.full(flat.grid.shape, math.log(A)), 0.0, 1.0, 0.0, 1.0)
    inf, l1 = dg.infimum_and_l1_report(flat, st)
    assert inf == pytest.approx(math.log(A))
    assert l1 == pytest.approx(abs(math.log(A)), rel=1e-14)
    assert dg.second_order_ratio(flat, st) == 0.0


def test_flat_certificates_vanish(flat):
    st, _ = sv.continuity_march(flat, sv.SolverConfig(A=0.01))
    rep = dg.geometry_certificates(flat, st)
    for key in ("balanced_defect", "ricci_prescription_error", "ricci_sup", "bismut_gap", "C2", "rho"):
        assert getattr(rep, key) <= 1e-12, key
    assert rep.K >= 1.0 and rep.sup_phi >= rep.inf_phi


def test_certificates_require_converged_state(flat):
    st = sv.SolutionState(np.zeros(flat.grid.shape), 0.0, 0.5, 0.0, 1.0)
    with pytest.raises(sv.SolverError):
        dg.geometry_certificates(flat, st)


def test_manufactured_certificates(perturbed, grid2):
    phi_star = presets.phi_star_modes(grid2, 1.0)
    m = dg.manufacture(perturbed, phi_star)
    ctx = perturbed.with_data(h=m.h)
    st, trace = sv.continuity_march(ctx, sv.SolverConfig(A=0.01))
    rep = dg.geometry_certificates(ctx, st)
    assert rep.balanced_defect_omega0 <= 1e-11
    assert rep.balanced_defect <= 1e-8
    assert abs(rep.balanced_defect - rep.balanced_defect_omega0) <= 1e-10
    assert rep.ricci_prescription_error <= 1e-7
    assert rep.bismut_gap <= 1e-7
    exact = grid2.resolve(phi_star) + math.log(0.01 / m.A)
    assert np.max(np.abs(st.phi - exact)) <= 1e-8
    assert set(rep.as_dict()) >= {"rho", "K", "C2", "collocation_sup"}


def test_calabi_yau_certificate(perturbed):
    ctx = perturbed.with_data(h=-np.linalg.slogdet(perturbed.alpha)[1])
    st, _ = sv.continuity_march(ctx, sv.SolverConfig(A=0.01))
    rep = dg.geometry_certificates(ctx, st)
    assert rep.ricci_sup <= 1e-6
    assert rep.balanced_defect <= 1e-8
    assert rep.bismut_gap <= 1e-7
    assert np.ptp(st.phi) > 1e-3  # non-trivial solution


def test_scan_flat_trivial(flat):
    res = dg.moser_scan(flat, [1e-1, 1e-2])
    assert [r.sup_phi_plus for r in res.rows] == [0.0, 0.0]
    assert res.M_hat == 0.0 and res.degenerate and math.isnan(res.exponent)
    assert res.bound_holds() and res.sup_le_one
    for r in res.rows:
        assert r.sup_phi == pytest.approx(math.log(r.A), abs=1e-12)


def test_scan_input_validation(flat):
    with pytest.raises(ValueError):
        dg.moser_scan(flat, [1e-2, 1e-1])
    with pytest.raises(ValueError):
        dg.moser_scan(flat, [1e-1, -1.0])


def test_scan_perturbed_two_points(perturbed, grid2):
    m = dg.manufacture(perturbed, presets.phi_star_modes(grid2, 1.0))
    ctx = perturbed.with_data(h=m.h)
    res = dg.moser_scan(ctx, [1e-1, 1e-2])
    assert len(res.rows) == 2 and res.failure is None
    assert res.bound_holds()
    assert res.M_hat == pytest.approx(max(r.sup_phi_plus / r.A ** 0.25 for r in res.rows))
    assert all(math.isfinite(r.rho) for r in res.rows)
    assert res.max_rho == max(r.rho for r in res.rows)
    assert len(res.traces) == 2


def test_worker_count(monkeypatch):
    monkeypatch.setenv("FORMCY_THREADS", "3")
    assert dg.worker_count() == 3
    monkeypatch.setenv("FORMCY_THREADS", "x")
    assert dg.worker_count() == 1
