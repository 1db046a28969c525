"""Pointwise exterior algebra of (p,q)-forms on C^n with a Hermitian inner product.

Layout
------
A (p,q)-form is stored by its canonical coefficients ``c[I, J]`` on the basis
``dz_I ^ dzbar_J`` with ``I`` and ``J`` strictly increasing multi-indices in
lexicographic order (the order produced by :func:`itertools.combinations`).
All holomorphic factors are placed before the antiholomorphic ones.
Coefficient arrays may carry arbitrary leading batch axes, so a field of forms
on a grid is just a form whose coefficients have shape ``grid + (C(n,p), C(n,q))``.

A real (1,1)-form ``sqrt(-1) a_{ij} dz_i ^ dzbar_j`` is identified with the
Hermitian matrix ``a``; this is the representation used for metrics.

Hodge star
----------
``star_oracle`` is defined from first principles by
``<u, v> vol = u ^ *conj(v)`` with ``vol = alpha^n / n!`` and the induced
determinant inner product for which ``dz_I ^ dzbar_J`` is orthonormal when
``alpha`` is the identity.  With this normalization ``*1 = alpha^n/n!`` and
``*(alpha^{n-1}/(n-1)!) = alpha`` hold exactly, and ``** = (-1)^(p+q)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "FormDegreeError",
    "MetricError",
    "MultiIndexForm",
    "multi_indices",
    "zero",
    "one",
    "from_hermitian",
    "to_hermitian",
    "from_tensor",
    "to_tensor",
    "wedge",
    "power",
    "conjugate",
    "real_part",
    "volume_form",
    "star_oracle",
    "StarOperator",
    "star_to_hermitian",
    "star_22_closed_form",
    "star_33_closed_form",
    "metric_trace",
    "metric_inverse",
    "check_metric",
]


class FormDegreeError(ValueError):
    """Bidegree out of range or incompatible with the requested operation."""


class MetricError(ValueError):
    """Metric is not Hermitian positive definite."""


@lru_cache(maxsize=None)
def multi_indices(n: int, p: int) -> tuple[tuple[int, ...], ...]:
    """Strictly increasing ``p``-tuples from ``range(n)`` in lexicographic order."""
    return tuple(itertools.combinations(range(n), p))


@lru_cache(maxsize=None)
def _position(n: int, p: int) -> dict[tuple[int, ...], int]:
    return {idx: k for k, idx in enumerate(multi_indices(n, p))}


def _perm_sign(seq) -> int:
    """Sign of the permutation sorting ``seq`` (entries distinct)."""
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@dataclass(frozen=True)
class MultiIndexForm:
    """A (p,q)-form (or a batch of them) in canonical multi-index layout."""

    n: int
    p: int
    q: int
    coeffs: np.ndarray

    def __post_init__(self):
        if not (0 <= self.p <= self.n and 0 <= self.q <= self.n):
            raise FormDegreeError(f"bidegree ({self.p},{self.q}) invalid for n={self.n}")
        c = np.asarray(self.coeffs, dtype=complex)
        want = (math.comb(self.n, self.p), math.comb(self.n, self.q))
        if c.shape[-2:] != want:
            raise FormDegreeError(f"coefficient table {c.shape[-2:]} != {want}")
        object.__setattr__(self, "coeffs", c)

    @property
    def bidegree(self) -> tuple[int, int]:
        return (self.p, self.q)

    @property
    def degree(self) -> int:
        return self.p + self.q

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-2]

    def _check_same(self, other: "MultiIndexForm"):
        if (self.n, self.p, self.q) != (other.n, other.p, other.q):
            raise FormDegreeError("forms of different type cannot be added")

    def __add__(self, other: "MultiIndexForm") -> "MultiIndexForm":
        self._check_same(other)
        return MultiIndexForm(self.n, self.p, self.q, self.coeffs + other.coeffs)

    def __sub__(self, other: "MultiIndexForm") -> "MultiIndexForm":
        self._check_same(other)
        return MultiIndexForm(self.n, self.p, self.q, self.coeffs - other.coeffs)

    def __neg__(self) -> "MultiIndexForm":
        return MultiIndexForm(self.n, self.p, self.q, -self.coeffs)

    def scale(self, s) -> "MultiIndexForm":
        """Multiply by a scalar or by a batch of scalars (broadcast over batch axes)."""
        s = np.asarray(s)
        return MultiIndexForm(self.n, self.p, self.q, self.coeffs * s[..., None, None])

    def __mul__(self, s) -> "MultiIndexForm":
        return self.scale(s)

    __rmul__ = __mul__

    def __xor__(self, other: "MultiIndexForm") -> "MultiIndexForm":
        return wedge(self, other)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0


def zero(n: int, p: int, q: int, batch_shape=()) -> MultiIndexForm:
    shape = tuple(batch_shape) + (math.comb(n, p), math.comb(n, q))
    return MultiIndexForm(n, p, q, np.zeros(shape, dtype=complex))


def one(n: int, batch_shape=()) -> MultiIndexForm:
    """The constant function 1 as a (0,0)-form."""
    return MultiIndexForm(n, 0, 0, np.ones(tuple(batch_shape) + (1, 1), dtype=complex))


def from_hermitian(a: np.ndarray) -> MultiIndexForm:
    """The (1,1)-form ``sqrt(-1) a_{ij} dz_i ^ dzbar_j`` for a (batch of) matrices ``a``."""
    a = np.asarray(a)
    return MultiIndexForm(a.shape[-1], 1, 1, 1j * a)


def to_hermitian(f: MultiIndexForm) -> np.ndarray:
    """Inverse of :func:`from_hermitian`; returns the (possibly non-Hermitian) matrix."""
    if f.bidegree != (1, 1):
        raise FormDegreeError(f"expected a (1,1)-form, got {f.bidegree}")
    return -1j * f.coeffs


# ---------------------------------------------------------------------------
# full antisymmetric tensor components


def to_tensor(f: MultiIndexForm) -> np.ndarray:
    """Antisymmetric components ``F[i_1..i_p, j_1..j_q]`` with
    ``f = (1/(p! q!)) sum F dz_{i_1}^..^dz_{i_p}^dzbar_{j_1}^..^dzbar_{j_q}``.
    """
    n, p, q = f.n, f.p, f.q
    out = np.zeros(f.batch_shape + (n,) * (p + q), dtype=complex)
    for a, I in enumerate(multi_indices(n, p)):
        for sI in itertools.permutations(range(p)):
            PI = tuple(I[k] for k in sI)
            sgnI = _perm_sign(sI)
            for b, J in enumerate(multi_indices(n, q)):
                for sJ in itertools.permutations(range(q)):
                    PJ = tuple(J[k] for k in sJ)
                    out[(Ellipsis,) + PI + PJ] = sgnI * _perm_sign(sJ) * f.coeffs[..., a, b]
    return out


def from_tensor(t: np.ndarray, n: int, p: int, q: int, antisymmetrize: bool = True) -> MultiIndexForm:
    """Canonical form of ``(1/(p!q!)) sum t[i.., j..] dz_i.. ^ dzbar_j..``.

    With ``antisymmetrize`` the tensor is first projected onto its antisymmetric
    part, so arbitrary index-valued coefficient arrays are accepted.
    """
    t = np.asarray(t, dtype=complex)
    batch = t.shape[: t.ndim - p - q]
    if antisymmetrize:
        acc = np.zeros_like(t)
        nb = len(batch)
        for sI in itertools.permutations(range(p)):
            for sJ in itertools.permutations(range(q)):
                axes = list(range(nb)) + [nb + k for k in sI] + [nb + p + k for k in sJ]
                acc = acc + _perm_sign(sI) * _perm_sign(sJ) * np.transpose(t, axes)
        t = acc / (math.factorial(p) * math.factorial(q))
    coeffs = np.zeros(batch + (math.comb(n, p), math.comb(n, q)), dtype=complex)
    for a, I in enumerate(multi_indices(n, p)):
        for b, J in enumerate(multi_indices(n, q)):
            coeffs[..., a, b] = t[(Ellipsis,) + I + J]
    return MultiIndexForm(n, p, q, coeffs)


# ---------------------------------------------------------------------------
# wedge


@lru_cache(maxsize=None)
def _join_table(n: int, p1: int, p2: int) -> np.ndarray:
    """S[I, K, M] = sign with dz_I ^ dz_K = S dz_M (zero unless I, K disjoint)."""
    A, B, C = multi_indices(n, p1), multi_indices(n, p2), _position(n, p1 + p2)
    S = np.zeros((len(A), len(B), len(C)))
    for a, I in enumerate(A):
        for b, K in enumerate(B):
            if set(I) & set(K):
                continue
            merged = I + K
            S[a, b, C[tuple(sorted(merged))]] = _perm_sign(merged)
    return S


def wedge(a: MultiIndexForm, b: MultiIndexForm) -> MultiIndexForm:
    """Exterior product; batch axes broadcast."""
    if a.n != b.n:
        raise FormDegreeError("forms live in different dimensions")
    n = a.n
    p, q = a.p + b.p, a.q + b.q
    if p > n or q > n:
        raise FormDegreeError(f"wedge overflows: bidegree ({p},{q}) with n={n}")
    Sh = _join_table(n, a.p, b.p)
    Sa = _join_table(n, a.q, b.q)
    # dz_I dzbar_J dz_K dzbar_L = (-1)^{|J||K|} dz_I dz_K dzbar_J dzbar_L
    sign = -1.0 if (a.q * b.p) % 2 else 1.0
    ab = a.coeffs[..., :, :, None, None] * b.coeffs[..., None, None, :, :]
    out = np.einsum("...ijkl,ikm,jln->...mn", ab, Sh, Sa, optimize=True)
    return MultiIndexForm(n, p, q, sign * out)


def power(f: MultiIndexForm, k: int) -> MultiIndexForm:
    """``f ^ f ^ ... ^ f`` (k factors); ``k = 0`` gives the constant 1."""
    out = one(f.n, f.batch_shape)
    for _ in range(k):
        out = wedge(out, f)
    return out


def conjugate(f: MultiIndexForm) -> MultiIndexForm:
    """Complex conjugate form; maps (p,q) to (q,p)."""
    sign = -1.0 if (f.p * f.q) % 2 else 1.0
    c = sign * np.conj(np.swapaxes(f.coeffs, -1, -2))
    return MultiIndexForm(f.n, f.q, f.p, c)


def real_part(f: MultiIndexForm) -> MultiIndexForm:
    """``(f + conj f)/2`` for a form of bidegree (p,p)."""
    if f.p != f.q:
        raise FormDegreeError("real part only defined here for (p,p)-forms")
    return MultiIndexForm(f.n, f.p, f.q, 0.5 * (f.coeffs + conjugate(f).coeffs))


# ---------------------------------------------------------------------------
# metric helpers


def check_metric(metric: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Validate a (batch of) Hermitian positive definite matrices."""
    g = np.asarray(metric, dtype=complex)
    if g.ndim < 2 or g.shape[-1] != g.shape[-2]:
        raise MetricError("metric must be a square matrix (per point)")
    if not np.allclose(g, np.conj(np.swapaxes(g, -1, -2)), atol=1e-10 * (1 + np.max(np.abs(g)))):
        raise MetricError("metric is not Hermitian")
    lam = np.linalg.eigvalsh(g)
    if np.min(lam) <= tol:
        raise MetricError(f"metric not positive definite (min eigenvalue {np.min(lam):.3e})")
    return g


def metric_inverse(metric: np.ndarray) -> np.ndarray:
    return np.linalg.inv(metric)


def metric_trace(f: MultiIndexForm, metric: np.ndarray) -> np.ndarray:
    """``alpha^{i jbar} f_{i jbar}`` for a (1,1)-form ``f``."""
    if f.bidegree != (1, 1):
        raise FormDegreeError(f"trace needs a (1,1)-form, got {f.bidegree}")
    m = to_hermitian(f)
    return np.trace(np.linalg.solve(metric, m), axis1=-2, axis2=-1)


@lru_cache(maxsize=None)
def _minor_index(n: int, p: int):
    idx = np.array(multi_indices(n, p), dtype=int).reshape(-1, p)
    rows = idx[:, None, :, None]
    cols = idx[None, :, None, :]
    return rows, cols


def _minors(g: np.ndarray, p: int) -> np.ndarray:
    """Matrix of all p x p minors ``det g[I, K]``."""
    n = g.shape[-1]
    if p == 0:
        return np.ones(g.shape[:-2] + (1, 1), dtype=complex)
    rows, cols = _minor_index(n, p)
    sub = g[..., rows, cols]
    return np.linalg.det(sub)


@lru_cache(maxsize=None)
def _pairing_signs(n: int, p: int, q: int) -> np.ndarray:
    """s[K, L] with e_{KL} ^ e_{cK, cL} = s e_top, for |K| = p, |L| = q."""
    full = tuple(range(n))
    s = np.zeros((math.comb(n, p), math.comb(n, q)))
    for a, K in enumerate(multi_indices(n, p)):
        cK = tuple(i for i in full if i not in K)
        for b, L in enumerate(multi_indices(n, q)):
            cL = tuple(i for i in full if i not in L)
            sign = -1 if (len(L) * len(cK)) % 2 else 1
            s[a, b] = sign * _perm_sign(K + cK) * _perm_sign(L + cL)
    return s


def volume_form(metric: np.ndarray) -> MultiIndexForm:
    """``alpha^n / n!`` as an (n,n)-form."""
    g = np.asarray(metric, dtype=complex)
    n = g.shape[-1]
    c = (1j**n) * (-1) ** (n * (n - 1) // 2) * np.linalg.det(g)
    return MultiIndexForm(n, n, n, c[..., None, None])


class StarOperator:
    """Hodge star of a fixed metric field on (p,q)-forms, with the metric factors precomputed.

    ``StarOperator(metric, p, q)(f)`` equals :func:`star_oracle` ``(f, metric)``.
    """

    def __init__(self, metric: np.ndarray, p: int, q: int, check: bool = True):
        g = check_metric(metric) if check else np.asarray(metric, dtype=complex)
        n = g.shape[-1]
        if not (0 <= p <= n and 0 <= q <= n):
            raise FormDegreeError(f"bidegree ({p},{q}) invalid for n={n}")
        self.n, self.p, self.q = n, p, q
        ginv = np.linalg.inv(g)
        self.m10 = _minors(np.conj(ginv), q)  # <dz_K, dz_K'>, |K| = q
        self.m01t = np.swapaxes(_minors(ginv, p), -1, -2)  # <dzbar_L, dzbar_L'>, |L| = p
        volc = (1j**n) * (-1) ** (n * (n - 1) // 2) * np.linalg.det(g)
        sgn = -1.0 if (p * q) % 2 else 1.0
        self.scale = sgn * _pairing_signs(n, q, p) * volc[..., None, None]

    def __call__(self, f: MultiIndexForm) -> MultiIndexForm:
        if (f.n, f.p, f.q) != (self.n, self.p, self.q):
            raise FormDegreeError("form does not match the star operator's bidegree")
        vals = self.scale * (self.m10 @ np.swapaxes(f.coeffs, -1, -2) @ self.m01t)
        # rows K -> complement(K), columns L -> complement(L); complements reverse lex order
        return MultiIndexForm(self.n, self.n - self.q, self.n - self.p, vals[..., ::-1, ::-1])


def star_oracle(f: MultiIndexForm, metric: np.ndarray, check: bool = True) -> MultiIndexForm:
    """Hodge star of ``metric`` from its defining identity ``<u,v> vol = u ^ *conj(v)``.

    Complex linear; maps (p,q) to (n-q, n-p).
    """
    if np.shape(metric)[-1] != f.n:
        raise FormDegreeError("metric and form dimensions disagree")
    return StarOperator(metric, f.p, f.q, check=check)(f)


def star_to_hermitian(f: MultiIndexForm, metric: np.ndarray, check: bool = True) -> np.ndarray:
    """Hermitian-matrix representative of ``*f`` for an (n-1,n-1)-form ``f``."""
    if f.bidegree != (f.n - 1, f.n - 1):
        raise FormDegreeError("expected an (n-1,n-1)-form")
    return to_hermitian(star_oracle(f, metric, check=check))


# ---------------------------------------------------------------------------
# closed-form stars of (2,2)- and (3,3)-forms wedged with powers of the metric
#
# Tensor convention: the interleaved components Phi_{s rbar k lbar} satisfy
#   Phi = (1/4) sum Phi_{s rbar k lbar} dz_s ^ dzbar_r ^ dz_k ^ dzbar_l,
# and likewise Psi = (1/36) sum Psi_{s rbar p qbar k lbar} (dz dzbar)^3.
# Traces contract each holomorphic slot with the antiholomorphic slot to its right.


def interleaved_components(f: MultiIndexForm) -> np.ndarray:
    """Components in the interleaved ``(dz_a ^ dzbar_b)^p`` slot order for a (p,p)-form."""
    if f.p != f.q:
        raise FormDegreeError("interleaved components need a (p,p)-form")
    p = f.p
    t = to_tensor(f)
    nb = len(f.batch_shape)
    # holo-first slots (h_1..h_p, a_1..a_p) -> (h_1, a_1, ..., h_p, a_p)
    order = []
    for k in range(p):
        order += [nb + k, nb + p + k]
    t = np.transpose(t, list(range(nb)) + order)
    # dz_{h1} dz.. dzbar.. = sign * interleaved product
    perm = []
    for k in range(p):
        perm += [k, p + k]
    return _perm_sign(perm) * t


def _contract_leading(t: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    nb = ginv.ndim - 2
    n = ginv.shape[-1]
    rest = t.shape[nb + 2 :]
    flat = t.reshape(t.shape[:nb] + (n, n, -1))
    out = np.einsum("...rs,...srx->...x", ginv, flat)
    return out.reshape(t.shape[:nb] + rest)


def star_22_closed_form(phi22: MultiIndexForm, metric: np.ndarray) -> np.ndarray:
    """Hermitian matrix of ``*(Phi ^ alpha^{n-3})`` via contraction with ``alpha^{-1}``.

    ``(n-3)! ( alpha^{s rbar} Phi_{s rbar k lbar} - (1/2) tr(Phi) alpha_{k lbar} )``
    with the interleaved component convention above.
    """
    n = phi22.n
    if n < 3:
        raise FormDegreeError("star of Phi ^ alpha^(n-3) needs n >= 3")
    if phi22.bidegree != (2, 2):
        raise FormDegreeError(f"expected a (2,2)-form, got {phi22.bidegree}")
    g = np.asarray(metric, dtype=complex)
    ginv = np.linalg.inv(g)
    t = interleaved_components(phi22)
    c1 = _contract_leading(t, ginv)
    tr = _contract_leading(c1, ginv)
    return math.factorial(n - 3) * (c1 - 0.5 * tr[..., None, None] * g)


def star_33_closed_form(psi33: MultiIndexForm, metric: np.ndarray) -> np.ndarray:
    """Hermitian matrix of ``*(Psi ^ alpha^{n-4})`` via double contraction with ``alpha^{-1}``.

    ``-sqrt(-1) (n-4)! ( (1/2) alpha^{s rbar} alpha^{p qbar} Psi_{s rbar p qbar k lbar}
    - (1/6) tr(Psi) alpha_{k lbar} )``; the phase comes from the odd number of
    ``sqrt(-1)`` factors carried by the components of a real (3,3)-form.
    """
    n = psi33.n
    if n < 4:
        raise FormDegreeError("star of Psi ^ alpha^(n-4) needs n >= 4")
    if psi33.bidegree != (3, 3):
        raise FormDegreeError(f"expected a (3,3)-form, got {psi33.bidegree}")
    g = np.asarray(metric, dtype=complex)
    ginv = np.linalg.inv(g)
    t = interleaved_components(psi33)
    c2 = _contract_leading(_contract_leading(t, ginv), ginv)
    tr = _contract_leading(c2, ginv)
    return -1j * math.factorial(n - 4) * (0.5 * c2 - tr[..., None, None] * g / 6.0)
