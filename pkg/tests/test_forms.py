import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formcy import forms
from formcy.forms import MultiIndexForm

from conftest import random_hermitian, random_metric


def random_form(rng, n, p, q, batch=()):
    shape = batch + (math.comb(n, p), math.comb(n, q))
    return MultiIndexForm(n, p, q, rng.normal(size=shape) + 1j * rng.normal(size=shape))


def wedge_oracle(a, b):
    """Fully expanded tensor product, reordered holomorphic-first and antisymmetrized."""
    p1, q1, p2, q2 = a.p, a.q, b.p, b.q
    A, B = forms.to_tensor(a), forms.to_tensor(b)
    t = np.multiply.outer(A, B)  # axes I1 J1 I2 J2
    axes = list(range(p1)) + [p1 + q1 + k for k in range(p2)] + [p1 + k for k in range(q1)] + [p1 + q1 + p2 + k for k in range(q2)]
    t = np.transpose(t, axes)
    sign = (-1) ** (q1 * p2)
    p, q = p1 + p2, q1 + q2
    c = math.factorial(p) * math.factorial(q) / (math.factorial(p1) * math.factorial(p2) * math.factorial(q1) * math.factorial(q2))
    return forms.from_tensor(sign * c * t, a.n, p, q)


def test_layout_sizes():
    f = forms.zero(4, 2, 1)
    assert f.coeffs.shape == (6, 4)
    with pytest.raises(forms.FormDegreeError):
        MultiIndexForm(3, 4, 0, np.zeros((0, 1)))
    with pytest.raises(forms.FormDegreeError):
        MultiIndexForm(3, 1, 1, np.zeros((2, 3)))


def test_tensor_round_trip(rng):
    for p, q in [(0, 0), (1, 2), (2, 2), (3, 1)]:
        f = random_form(rng, 3, p, q)
        back = forms.from_tensor(forms.to_tensor(f), 3, p, q)
        np.testing.assert_allclose(back.coeffs, f.coeffs, atol=1e-14)


def test_wedge_sign_calibration():
    e1 = np.zeros((3, 3)); e1[0, 0] = 1
    e2 = np.zeros((3, 3)); e2[1, 1] = 1
    w = forms.wedge(forms.from_hermitian(e1), forms.from_hermitian(e2))
    assert w.bidegree == (2, 2)
    expected = np.zeros((3, 3))
    expected[0, 0] = 1.0  # ({1,2},{1,2}) is the first multi-index pair
    np.testing.assert_array_equal(w.coeffs, expected)


def test_a_wedge_a_vanishes(rng):
    a = random_form(rng, 3, 1, 0)
    assert forms.wedge(a, a).max_abs() <= 1e-15


def test_wedge_matches_tensor_oracle_and_is_associative(rng):
    bideg = [(0, 1), (1, 0), (1, 1), (0, 0), (1, 2), (2, 0)]
    count = 0
    for _ in range(50):
        picks = [bideg[i] for i in rng.integers(0, len(bideg), size=3)]
        if sum(p for p, _ in picks) > 3 or sum(q for _, q in picks) > 3:
            picks = [(1, 0), (0, 1), (1, 1)]
        a, b, c = (random_form(rng, 3, p, q) for p, q in picks)
        left = forms.wedge(forms.wedge(a, b), c)
        right = forms.wedge(a, forms.wedge(b, c))
        oracle = wedge_oracle(wedge_oracle(a, b), c)
        np.testing.assert_allclose(left.coeffs, right.coeffs, atol=1e-13)
        np.testing.assert_allclose(left.coeffs, oracle.coeffs, atol=1e-13)
        count += 1
    assert count == 50


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p1=st.integers(0, 2), q1=st.integers(0, 2), p2=st.integers(0, 1), q2=st.integers(0, 1), s=st.floats(-3, 3))
def test_wedge_bilinear_and_graded_commutative(seed, p1, q1, p2, q2, s):
    rng = np.random.default_rng(seed)
    a, a2 = random_form(rng, 3, p1, q1), random_form(rng, 3, p1, q1)
    b = random_form(rng, 3, p2, q2)
    lhs = forms.wedge(a + a2.scale(s), b)
    rhs = forms.wedge(a, b) + forms.wedge(a2, b).scale(s)
    np.testing.assert_allclose(lhs.coeffs, rhs.coeffs, atol=1e-12)
    ab, ba = forms.wedge(a, b), forms.wedge(b, a)
    sign = (-1) ** ((p1 + q1) * (p2 + q2))
    np.testing.assert_allclose(ab.coeffs, sign * ba.coeffs, atol=1e-13)


def test_wedge_overflow_rejected(rng):
    with pytest.raises(forms.FormDegreeError):
        forms.wedge(random_form(rng, 3, 2, 0), random_form(rng, 3, 2, 0))


def test_star_anchors():
    g = np.eye(3)
    vol = forms.star_oracle(forms.one(3), g)
    np.testing.assert_allclose(vol.coeffs, forms.power(forms.from_hermitian(g), 3).coeffs / 6, atol=1e-15)
    chi = forms.star_to_hermitian(forms.power(forms.from_hermitian(g), 2), g) / 2
    np.testing.assert_allclose(chi, np.eye(3), atol=1e-15)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_star_metric_anchor_random(rng, n):
    g = random_metric(rng, n, (5,))
    got = forms.star_to_hermitian(forms.power(forms.from_hermitian(g), n - 1), g) / math.factorial(n - 1)
    np.testing.assert_allclose(got, g, rtol=1e-12, atol=1e-12 * np.max(np.abs(g)))


@pytest.mark.parametrize("n", [3, 4])
def test_star_involution_sign_table(rng, n):
    g = random_metric(rng, n, (4,))
    for p, q in itertools.product(range(n + 1), repeat=2):
        f = random_form(rng, n, p, q, (4,))
        twice = forms.star_oracle(forms.star_oracle(f, g), g)
        assert twice.bidegree == (p, q)
        np.testing.assert_allclose(twice.coeffs, (-1) ** (p + q) * f.coeffs, atol=1e-10 * (1 + f.max_abs()))


def test_star_operator_matches_oracle(rng):
    g = random_metric(rng, 3, (6,))
    f = random_form(rng, 3, 1, 2, (6,))
    op = forms.StarOperator(g, 1, 2)
    np.testing.assert_array_equal(op(f).coeffs, forms.star_oracle(f, g).coeffs)
    with pytest.raises(forms.FormDegreeError):
        op(random_form(rng, 3, 2, 1, (6,)))


def test_star_inner_product_definition(rng):
    """<u, v> vol = u ^ *conj(v) with the determinant inner product at the identity."""
    n, p, q = 3, 1, 1
    u, v = random_form(rng, n, p, q), random_form(rng, n, p, q)
    lhs = forms.wedge(u, forms.star_oracle(forms.conjugate(v), np.eye(n)))
    inner = np.sum(u.coeffs * np.conj(forms.conjugate(forms.conjugate(v)).coeffs))
    vol = forms.volume_form(np.eye(n))
    np.testing.assert_allclose(lhs.coeffs, inner * vol.coeffs, atol=1e-12)


def test_star_rejects_bad_metric():
    with pytest.raises(forms.MetricError):
        forms.star_oracle(forms.one(3), -np.eye(3))
    with pytest.raises(forms.MetricError):
        forms.star_oracle(forms.one(3), np.array([[1, 1j, 0], [1j, 1, 0], [0, 0, 1]]))


def real_pp(rng, n, p, batch=(), terms=3):
    out = forms.zero(n, p, p, batch)
    for _ in range(terms):
        f = forms.one(n, batch)
        for _k in range(p):
            f = forms.wedge(f, forms.from_hermitian(random_hermitian(rng, n, batch)))
        out = out + f
    return out


def test_star22_zero_and_alpha_squared():
    n = 3
    g = np.eye(n)
    assert np.max(np.abs(forms.star_22_closed_form(forms.zero(n, 2, 2), g))) == 0.0
    aa = forms.power(forms.from_hermitian(g), 2)
    closed = forms.star_22_closed_form(aa, g)
    oracle = forms.star_to_hermitian(aa, g)
    np.testing.assert_allclose(closed, oracle, atol=1e-12)
    np.testing.assert_allclose(closed, closed[0, 0] * np.eye(n), atol=1e-12)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_star22_closed_form_vs_oracle(rng, n):
    phi = real_pp(rng, n, 2, (100,))
    g = random_metric(rng, n, (100,))
    ref = forms.star_to_hermitian(forms.wedge(phi, forms.power(forms.from_hermitian(g), n - 3)), g)
    got = forms.star_22_closed_form(phi, g)
    assert np.max(np.abs(got - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_star33_closed_form_vs_oracle(rng):
    n = 4
    g0 = np.eye(n)
    aaa = forms.power(forms.from_hermitian(g0), 3)
    got0 = forms.star_33_closed_form(aaa, g0)
    np.testing.assert_allclose(got0, got0[0, 0] * np.eye(n), atol=1e-12)
    np.testing.assert_allclose(got0, forms.star_to_hermitian(aaa, g0), atol=1e-12)
    psi = real_pp(rng, n, 3, (100,))
    g = random_metric(rng, n, (100,))
    ref = forms.star_to_hermitian(psi, g)
    got = forms.star_33_closed_form(psi, g)
    assert np.max(np.abs(got - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_closed_forms_reject_bad_degree(rng):
    with pytest.raises(forms.FormDegreeError):
        forms.star_22_closed_form(random_form(rng, 3, 1, 1), np.eye(3))
    with pytest.raises(forms.FormDegreeError):
        forms.star_33_closed_form(random_form(rng, 3, 3, 3), np.eye(3))


def test_laplacian_identity_constant(rng):
    """*(i ddbar phi ^ alpha^{n-2})/(n-1)! = (tr H alpha - H)/(n-1) pointwise, constant (n-1)!."""
    for n in (3, 4):
        g = random_metric(rng, n, (10,))
        H = random_hermitian(rng, n, (10,))
        top = forms.wedge(forms.from_hermitian(H), forms.power(forms.from_hermitian(g), n - 2))
        lhs = forms.star_to_hermitian(top, g) / math.factorial(n - 1)
        trH = np.trace(np.linalg.solve(g, H), axis1=-2, axis2=-1)
        rhs = (trH[..., None, None] * g - H) / (n - 1)
        np.testing.assert_allclose(lhs, rhs, atol=1e-11 * np.max(np.abs(rhs)))


def test_metric_trace(rng):
    assert forms.metric_trace(forms.from_hermitian(np.diag([1.0, 2.0, 3.0])), np.eye(3)) == pytest.approx(6.0, abs=1e-15)
    g = random_metric(rng, 4, (20,))
    np.testing.assert_allclose(forms.metric_trace(forms.from_hermitian(g), g).real, 4.0, atol=1e-12)
    f = random_hermitian(rng, 4, (20,))
    eig = np.linalg.eigvals(np.linalg.solve(g, f)).real.sum(axis=-1)
    np.testing.assert_allclose(forms.metric_trace(forms.from_hermitian(f), g).real, eig, atol=1e-12 * (1 + np.abs(eig).max()))
    with pytest.raises(forms.FormDegreeError):
        forms.metric_trace(forms.zero(4, 2, 1), g)


def test_conjugate_and_real_part(rng):
    H = random_hermitian(rng, 3)
    f = forms.from_hermitian(H)
    np.testing.assert_allclose(forms.conjugate(f).coeffs, f.coeffs, atol=1e-15)
    g = random_form(rng, 3, 2, 2)
    r = forms.real_part(g)
    np.testing.assert_allclose(forms.conjugate(r).coeffs, r.coeffs, atol=1e-14)
    with pytest.raises(forms.FormDegreeError):
        forms.real_part(random_form(rng, 3, 1, 0))
