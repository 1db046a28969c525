"""Hermitian geometry of periodic metrics on a complex torus.

Curvature conventions (``alpha^{p qbar}`` is the inverse metric):

    R_{i jbar k lbar} = -d_k dbar_l alpha_{i jbar}
                        + alpha^{p qbar} dbar_l alpha_{p jbar} d_k alpha_{i qbar}
    Ric_{i jbar}     = alpha^{k lbar} R_{k lbar i jbar}
    Ric2_{i jbar}    = alpha^{k lbar} R_{i jbar k lbar}
    Ric3_{i jbar}    = alpha^{k lbar} R_{k jbar i lbar}
    Ric4_{i jbar}    = alpha^{k lbar} R_{i lbar k jbar}

Torsion components are ``T_{s j kbar} = d_s alpha_{j kbar} - d_j alpha_{s kbar}``
(so ``d alpha^{1,0} = (sqrt(-1)/2) T_{s j kbar} dz_s ^ dz_j ^ dzbar_k``) and
``T_s = alpha^{j kbar} T_{s j kbar}``.

Array layout: a matrix field has shape ``grid.shape + (n, n)``; ``alpha^{p qbar}``
is stored as ``inv(A)[..., q, p]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import forms
from .forms import MultiIndexForm
from .grid import TorusGrid

__all__ = [
    "HermitianField",
    "CurvaturePack",
    "spectral_derivative",
    "d_holo",
    "d_antiholo",
    "exterior_d",
    "i_ddbar_form",
    "chern_curvature",
    "torsion",
    "astheno_ricci",
    "astheno_ricci_oracle",
    "chern_ricci_form",
    "closedness_defect",
    "balanced_defect",
    "codifferential",
    "bismut_ricci",
    "hermitian_part",
    "eigenvalues",
    "torsion_contractions",
    "astheno_pieces",
    "constant_metric",
    "conformal_metric",
    "kahler_metric",
    "astheno_kahler_metric",
    "admissible_background",
    "random_metric",
    "BackgroundRejected",
    "ScreenReport",
    "astheno_screen",
]


@dataclass(frozen=True)
class HermitianField:
    """One Hermitian matrix per grid point (coefficients of a real (1,1)-form)."""

    grid: TorusGrid
    values: np.ndarray
    kind: str = "form"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        want = self.grid.shape + (self.grid.n, self.grid.n)
        if v.shape != want:
            raise ValueError(f"field shape {v.shape} != {want}")
        object.__setattr__(self, "values", v)

    def hermitian_defect(self) -> float:
        v = self.values
        return float(np.max(np.abs(v - np.conj(np.swapaxes(v, -1, -2)))))

    def min_eigenvalue(self, metric: np.ndarray | None = None) -> float:
        """Smallest eigenvalue over the grid (relative to ``metric`` if given)."""
        return float(np.min(eigenvalues(self.values, metric)))

    def max_eigenvalue(self, metric: np.ndarray | None = None) -> float:
        return float(np.max(eigenvalues(self.values, metric)))

    def form(self) -> MultiIndexForm:
        return forms.from_hermitian(self.values)


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


def eigenvalues(m: np.ndarray, metric: np.ndarray | None = None) -> np.ndarray:
    """Eigenvalues of ``m`` with respect to ``metric`` (ascending), pointwise."""
    m = hermitian_part(np.asarray(m))
    if metric is None:
        return np.linalg.eigvalsh(m)
    L = np.linalg.cholesky(metric)
    Li = np.linalg.inv(L)
    return np.linalg.eigvalsh(hermitian_part(Li @ m @ np.conj(np.swapaxes(Li, -1, -2))))


def _metric_values(alpha) -> tuple[TorusGrid, np.ndarray]:
    if isinstance(alpha, HermitianField):
        return alpha.grid, alpha.values
    raise TypeError("expected a HermitianField")


def _require_positive(grid: TorusGrid, A: np.ndarray, what: str = "metric"):
    lam = np.linalg.eigvalsh(hermitian_part(A))
    if np.min(lam) <= 0:
        idx = np.unravel_index(np.argmin(np.min(lam, axis=-1)), grid.shape) if grid.ndim else ()
        raise forms.MetricError(f"{what} not positive definite at grid index {idx} (min eigenvalue {np.min(lam):.3e})")


# ---------------------------------------------------------------------------
# differentiation


def spectral_derivative(grid: TorusGrid, field: np.ndarray, direction: int, kind: str = "d") -> np.ndarray:
    """``d/dz_direction`` (kind ``"d"``) or ``d/dzbar_direction`` (kind ``"dbar"``) of a field."""
    if kind not in ("d", "dbar"):
        raise ValueError("kind must be 'd' or 'dbar'")
    return grid.d(field, direction, bar=(kind == "dbar"))


def _basis_covector(n: int, k: int, bar: bool) -> MultiIndexForm:
    c = np.zeros((n, 1) if not bar else (1, n), dtype=complex)
    c[(k, 0) if not bar else (0, k)] = 1.0
    return MultiIndexForm(n, 0 if bar else 1, 1 if bar else 0, c)


def d_holo(grid: TorusGrid, f: MultiIndexForm) -> MultiIndexForm:
    """``del`` of a form field: ``sum_k dz_k ^ d_k f``."""
    n = f.n
    out = forms.zero(n, f.p + 1, f.q, grid.shape) if f.p < n else None
    if out is None:
        raise forms.FormDegreeError("del of an (n,q)-form is zero-degree overflow")
    for k in grid.active_coords:
        dk = MultiIndexForm(n, f.p, f.q, grid.d(f.coeffs, k))
        out = out + forms.wedge(_basis_covector(n, k, False), dk)
    return out


def d_antiholo(grid: TorusGrid, f: MultiIndexForm) -> MultiIndexForm:
    """``delbar`` of a form field: ``sum_k dzbar_k ^ dbar_k f``."""
    n = f.n
    if f.q >= n:
        raise forms.FormDegreeError("delbar of a (p,n)-form overflows")
    out = forms.zero(n, f.p, f.q + 1, grid.shape)
    for k in grid.active_coords:
        dk = MultiIndexForm(n, f.p, f.q, grid.d(f.coeffs, k, bar=True))
        out = out + forms.wedge(_basis_covector(n, k, True), dk)
    return out


def exterior_d(grid: TorusGrid, f: MultiIndexForm) -> list[MultiIndexForm]:
    """``d f`` as its bidegree components ``[del f, delbar f]`` (omitting overflowing parts)."""
    parts = []
    if f.p < f.n:
        parts.append(d_holo(grid, f))
    if f.q < f.n:
        parts.append(d_antiholo(grid, f))
    return parts


def i_ddbar_form(grid: TorusGrid, f: MultiIndexForm) -> MultiIndexForm:
    """``sqrt(-1) del delbar f``."""
    g = d_holo(grid, d_antiholo(grid, f))
    return MultiIndexForm(g.n, g.p, g.q, 1j * g.coeffs)


# ---------------------------------------------------------------------------
# curvature and torsion


@dataclass(frozen=True)
class CurvaturePack:
    """Chern curvature, its four Ricci contractions, scalars and torsion, per grid point."""

    R: np.ndarray
    ric: np.ndarray
    ric2: np.ndarray
    ric3: np.ndarray
    ric4: np.ndarray
    scalar: np.ndarray
    scalar2: np.ndarray
    scalar3: np.ndarray
    scalar4: np.ndarray
    T: np.ndarray
    T_trace: np.ndarray
    tau: MultiIndexForm

    def max_abs(self) -> float:
        parts = [self.R, self.ric, self.ric2, self.ric3, self.ric4, self.T, self.T_trace]
        return max(float(np.max(np.abs(p))) if p.size else 0.0 for p in parts)


def _jets(grid: TorusGrid, A: np.ndarray):
    dA = grid.grad(A)  # [..., k, i, j] = d_k alpha_{i jbar}
    dbA = grid.grad(A, bar=True)  # [..., l, i, j] = dbar_l alpha_{i jbar}
    ddA = grid.ddbar(A)  # [..., k, l, i, j] = d_k dbar_l alpha_{i jbar}
    return dA, dbA, ddA


def torsion(alpha: HermitianField):
    """Torsion components ``T[..., s, j, k]``, trace ``T_s`` and the (1,0)-form ``tau``."""
    grid, A = _metric_values(alpha)
    dA = grid.grad(A)
    T = dA - np.swapaxes(dA, -3, -2)
    ginv = np.linalg.inv(A)
    Ts = np.einsum("...kj,...sjk->...s", ginv, T)
    tau = MultiIndexForm(grid.n, 1, 0, Ts[..., :, None])
    return T, Ts, tau


def chern_curvature(alpha: HermitianField) -> CurvaturePack:
    grid, A = _metric_values(alpha)
    _require_positive(grid, A)
    ginv = np.linalg.inv(A)
    dA, dbA, ddA = _jets(grid, A)
    R = -np.einsum("...klij->...ijkl", ddA) + np.einsum("...qp,...lpj,...kiq->...ijkl", ginv, dbA, dA, optimize=True)
    ric = np.einsum("...lk,...klij->...ij", ginv, R)
    ric2 = np.einsum("...lk,...ijkl->...ij", ginv, R)
    ric3 = np.einsum("...lk,...kjil->...ij", ginv, R)
    ric4 = np.einsum("...lk,...ilkj->...ij", ginv, R)

    def tr(m):
        return np.einsum("...ji,...ij->...", ginv, m)

    T, Ts, tau = torsion(alpha)
    return CurvaturePack(R, ric, ric2, ric3, ric4, tr(ric), tr(ric2), tr(ric3), tr(ric4), T, Ts, tau)


def torsion_contractions(T: np.ndarray, Ts: np.ndarray, ginv: np.ndarray) -> dict:
    """Quadratic torsion invariants (``alpha^{a bbar} = ginv[b, a]``).

    ``TT``      alpha^{j kbar} alpha^{s rbar} T_{m j rbar} conj(T_{l k sbar})
    ``Ttau``    alpha^{b dbar} T_{m b lbar} conj(T_d)
    ``tauT``    alpha^{a ebar} T_a conj(T_{l e mbar})
    ``TTcross`` alpha^{a dbar} alpha^{b ebar} T_{a b lbar} conj(T_{d e mbar})
    ``tautau``  T_m conj(T_l)
    and the scalars ``|T|^2 = tr TT`` and ``|tau|^2``.
    """
    Tc = np.conj(T)
    out = {
        "TT": np.einsum("...kj,...rs,...mjr,...lks->...ml", ginv, ginv, T, Tc, optimize=True),
        "Ttau": np.einsum("...db,...mbl,...d->...ml", ginv, T, np.conj(Ts), optimize=True),
        "tauT": np.einsum("...ea,...a,...lem->...ml", ginv, Ts, Tc, optimize=True),
        "TTcross": np.einsum("...da,...eb,...abl,...dem->...ml", ginv, ginv, T, Tc, optimize=True),
        "tautau": Ts[..., :, None] * np.conj(Ts)[..., None, :],
    }
    out["normT"] = np.einsum("...lm,...ml->...", ginv, out["TT"]).real
    out["normtau"] = np.einsum("...sr,...r,...s->...", ginv, Ts, np.conj(Ts)).real
    return out


def astheno_pieces(alpha: HermitianField, pack: CurvaturePack | None = None):
    """Contractions of ``i ddbar alpha`` and ``i dalpha ^ dbar alpha`` expressed by curvature and torsion.

    Returns ``(C1, tr1, C2, tr2)`` where ``C1 = alpha^{j kbar} (i ddbar alpha)_{j kbar m lbar}``,
    ``tr1`` its trace, ``C2`` the double contraction of ``i dalpha ^ dbar alpha`` divided by
    ``sqrt(-1)`` and ``tr2`` its trace.
    """
    grid, A = _metric_values(alpha)
    if pack is None:
        pack = chern_curvature(alpha)
    ginv = np.linalg.inv(A)
    tc = torsion_contractions(pack.T, pack.T_trace, ginv)
    C1 = pack.ric2 - pack.ric3 + pack.ric - pack.ric4 - tc["TT"]
    tr1 = 2 * pack.scalar - 2 * pack.scalar3 - tc["normT"]
    C2 = 2 * tc["TT"] + 2 * tc["Ttau"] + 2 * tc["tauT"] + tc["TTcross"] - 2 * tc["tautau"]
    tr2 = 3 * tc["normT"] - 6 * tc["normtau"]
    return C1, tr1, C2, tr2


def astheno_ricci(alpha: HermitianField, pack: CurvaturePack | None = None) -> HermitianField:
    """Closed-form astheno-Ricci curvature ``*(i ddbar alpha^{n-2})`` from curvature and torsion.

    ``i ddbar alpha^{n-2} = (n-2) i ddbar alpha ^ alpha^{n-3} + (n-2)(n-3) i dalpha ^ dbar alpha ^ alpha^{n-4}``
    and each term is starred with the contraction formulas of :mod:`formcy.forms`.
    """
    grid, A = _metric_values(alpha)
    n = grid.n
    if n < 3:
        raise forms.FormDegreeError("astheno-Ricci curvature needs n >= 3")
    C1, tr1, C2, tr2 = astheno_pieces(alpha, pack)
    c = math.factorial(n - 2)
    out = c * (C1 - 0.5 * tr1[..., None, None] * A)
    if n >= 4:
        out = out + c * (0.5 * C2 - tr2[..., None, None] * A / 6.0)
    return HermitianField(grid, hermitian_part(out))


def astheno_ricci_oracle(alpha: HermitianField) -> HermitianField:
    """``*(i ddbar alpha^{n-2})`` by repeated wedge, spectral ddbar and the first-principles star."""
    grid, A = _metric_values(alpha)
    n = grid.n
    if n < 3:
        raise forms.FormDegreeError("astheno-Ricci curvature needs n >= 3")
    _require_positive(grid, A)
    a = forms.from_hermitian(A)
    top = i_ddbar_form(grid, forms.power(a, n - 2))
    return HermitianField(grid, hermitian_part(forms.star_to_hermitian(top, A, check=False)))


def chern_ricci_form(omega: HermitianField) -> HermitianField:
    """Chern-Ricci form ``-i ddbar log det omega`` as a Hermitian matrix field."""
    grid, G = _metric_values(omega)
    _require_positive(grid, G)
    logdet = np.linalg.slogdet(G)[1]
    return HermitianField(grid, hermitian_part(-grid.ddbar(logdet)))


def closedness_defect(field: HermitianField) -> float:
    """Sup norm of ``d`` of the real (1,1)-form carried by ``field``."""
    f = forms.from_hermitian(field.values)
    return max(g.max_abs() for g in exterior_d(field.grid, f))


def balanced_defect(omega: HermitianField) -> float:
    """Sup norm of all coefficients of ``d(omega^{n-1})``."""
    grid, G = _metric_values(omega)
    top = forms.power(forms.from_hermitian(G), grid.n - 1)
    return max(g.max_abs() for g in exterior_d(grid, top))


def codifferential(omega: HermitianField) -> list[MultiIndexForm]:
    """``d* omega = - * d * omega`` (star of ``omega`` itself) as its (1,0) and (0,1) parts."""
    grid, G = _metric_values(omega)
    _require_positive(grid, G)
    s = forms.star_oracle(forms.from_hermitian(G), G, check=False)
    parts = []
    for piece in exterior_d(grid, s):
        parts.append(-forms.star_oracle(piece, G, check=False))
    return parts


def bismut_ricci(omega: HermitianField) -> HermitianField:
    """``Ric^B = Ric + d d* omega`` (the (1,1) component), with ``Ric`` the Chern-Ricci form."""
    grid, G = _metric_values(omega)
    ric = chern_ricci_form(omega).values
    dd = np.zeros_like(ric)
    for piece in codifferential(omega):
        for g in exterior_d(grid, piece):
            if g.bidegree == (1, 1):
                dd = dd + forms.to_hermitian(g)
    return HermitianField(grid, hermitian_part(ric + dd))


# ---------------------------------------------------------------------------
# test and background metrics


class BackgroundRejected(ValueError):
    """A candidate background failed the positivity or astheno-Ricci screen."""


@dataclass(frozen=True)
class ScreenReport:
    """Outcome of :func:`astheno_screen`; ``location`` is the grid index of ``max_eigenvalue``."""

    admissible: bool
    max_eigenvalue: float
    location: tuple
    min_metric_eigenvalue: float


def astheno_screen(alpha: HermitianField, tol: float = 1e-10) -> ScreenReport:
    """Check ``*i ddbar(alpha^{n-2}) <= 0``: largest oracle eigenvalue relative to ``alpha`` at most ``tol``."""
    grid, A = _metric_values(alpha)
    lam_min = float(np.min(np.linalg.eigvalsh(hermitian_part(A))))
    if lam_min <= 0:
        return ScreenReport(False, math.inf, (), lam_min)
    top = eigenvalues(astheno_ricci_oracle(alpha).values, A)[..., -1]
    idx = np.unravel_index(int(np.argmax(top)), top.shape) if top.ndim else ()
    m = float(np.max(top))
    return ScreenReport(m <= tol, m, tuple(int(i) for i in idx), lam_min)


def constant_metric(grid: TorusGrid, matrix=None) -> HermitianField:
    """Constant metric field (identity by default)."""
    n = grid.n
    m = np.eye(n, dtype=complex) if matrix is None else np.asarray(matrix, dtype=complex)
    return HermitianField(grid, np.broadcast_to(m, grid.shape + (n, n)).copy())


def conformal_metric(grid: TorusGrid, u: np.ndarray) -> HermitianField:
    """``e^u * identity``."""
    n = grid.n
    return HermitianField(grid, np.exp(np.asarray(u))[..., None, None] * np.eye(n))


def kahler_metric(grid: TorusGrid, rho: np.ndarray, base=None) -> HermitianField:
    """``base + ddbar rho`` (Kähler when ``base`` is constant); rejects non-positive results."""
    base = constant_metric(grid, base).values
    A = base + grid.ddbar(np.asarray(rho, dtype=float))
    A = hermitian_part(A)
    _require_positive(grid, A)
    return HermitianField(grid, A)


def astheno_kahler_metric(grid: TorusGrid, gamma: np.ndarray, scale: float = 1.0) -> HermitianField:
    """``scale * identity + (dbar gamma + conj)`` for a periodic (1,0)-form ``gamma``.

    ``gamma[..., j]`` is the coefficient of ``dz_j``. The result is pluriclosed
    (``i ddbar alpha = 0``), which is astheno-Kähler for ``n = 3``. When ``gamma`` depends on a
    single coordinate ``i dalpha ^ dbar alpha`` vanishes as well, so ``i ddbar alpha^k = 0`` for all ``k``.
    """
    n = grid.n
    gamma = np.asarray(gamma, dtype=complex)
    M = np.zeros(grid.shape + (n, n), dtype=complex)
    for k in grid.active_coords:
        M[..., :, k] = grid.d(gamma, k, bar=True)
    A = scale * np.eye(n) + M + np.conj(np.swapaxes(M, -1, -2))
    _require_positive(grid, A)
    return HermitianField(grid, A)


def admissible_background(
    grid: TorusGrid,
    seed: int,
    amplitude: float = 0.15,
    scale: float = 1.0,
    max_modes: int = 2,
    margin: float = 0.1,
    tol: float = 1e-10,
    max_tries: int = 100,
) -> HermitianField:
    """Rejection-sample a background with non-positive astheno-Ricci curvature.

    Candidates are pluriclosed metrics (see :func:`astheno_kahler_metric`) built from random
    Fourier modes ``|k| <= 2`` in the active coordinates (only the first one when ``n >= 4``).
    A candidate is accepted when its smallest eigenvalue exceeds ``margin * scale`` and the
    oracle astheno-Ricci eigenvalues are all ``<= tol``.
    """
    rng = np.random.default_rng(seed)
    X = grid.coordinates()
    n = grid.n
    ndir = 2 if n >= 4 else len(X)
    for _ in range(max_tries):
        gamma = np.zeros(grid.shape + (n,), dtype=complex)
        for j in range(n):
            for _m in range(int(rng.integers(1, max_modes + 1))):
                kv = rng.integers(-2, 3, size=ndir)
                if not np.any(kv):
                    continue
                c = (rng.normal() + 1j * rng.normal()) * amplitude / np.linalg.norm(kv)
                gamma[..., j] += c * np.exp(1j * sum(int(k) * x for k, x in zip(kv, X)))
        try:
            alpha = astheno_kahler_metric(grid, gamma, scale)
        except forms.MetricError:
            continue
        if alpha.min_eigenvalue() <= margin * scale:
            continue
        if astheno_ricci_oracle(alpha).max_eigenvalue() <= tol:
            return alpha
    raise BackgroundRejected(f"no admissible background after {max_tries} candidates")


def random_metric(grid: TorusGrid, seed: int, amplitude: float = 0.2, modes: int = 2) -> HermitianField:
    """Generic positive periodic metric ``I + sum_m (C_m e^{i k_m x} + h.c.)``.

    Each ``C_m`` is a random complex matrix of spectral norm ``amplitude``, so the metric is
    positive whenever ``2 * modes * amplitude < 1``.  Wavevectors have entries in ``{-2..2}``.
    """
    if 2 * modes * amplitude >= 1:
        raise ValueError("need 2 * modes * amplitude < 1 for guaranteed positivity")
    rng = np.random.default_rng(seed)
    n, X = grid.n, grid.coordinates()
    A = np.broadcast_to(np.eye(n, dtype=complex), grid.shape + (n, n)).copy()
    for _ in range(modes):
        C = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        C *= amplitude / np.linalg.norm(C, 2)
        kv = rng.integers(-2, 3, size=len(X))
        e = np.exp(1j * sum(int(k) * x for k, x in zip(kv, X)))[..., None, None] if X else 1.0
        A = A + C * e + np.conj(C.T) * np.conj(e)
    return HermitianField(grid, hermitian_part(A))
