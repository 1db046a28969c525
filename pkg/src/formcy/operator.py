"""The scalar operator of the form-type Calabi-Yau equation.

For a background metric ``alpha`` (matrix ``A``) and a balanced ``omega_0`` the unknown
potential ``phi`` enters through the (1,1)-form

    omega~ = chi~ + (Delta phi A - ddbar phi)/(n-1) + Z(dphi) + t phi B~

with ``chi~ = *(omega_0^{n-1})/(n-1)!`` and ``B~ = *(i ddbar alpha^{n-2})/(n-1)!`` (stars of
``alpha``).  The equation reads ``F(omega~) = (n-1)(t h + (1-t) h_0 + b)`` with
``F = sum log lambda~_i = log det(A^{-1} omega~)``.  The companion ``omega = T(omega~)`` has
eigenvalues ``lambda`` with ``lambda~_i = (sum lambda - lambda_i)/(n-1)``.

On the grid the first three terms are assembled in conservative form,
``(chi~ + *(i ddbar(phi alpha^{n-2}))/(n-1)!) - (1-t) phi B~``, with the spectral ``i ddbar``
applied to the grid product ``phi alpha^{n-2}``.  This keeps ``d(omega^^{n-1}) = d(omega_0^{n-1})``
exact on the grid; the product-rule form above is available for cross-checks.

Matrix fields carry the grid axes first and the ``(n, n)`` coefficient axes last.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field, replace

import numpy as np

from . import forms, geometry
from .geometry import HermitianField, hermitian_part
from .grid import TorusGrid

__all__ = [
    "DomainError",
    "EigenPair",
    "CoefficientSet",
    "OperatorContext",
    "build_context",
    "t_map",
    "t_inverse",
    "trace",
    "F_value",
    "coefficients",
    "kappa_estimate",
    "dichotomy",
    "assemble_omega_tilde",
    "assemble_omega",
    "admissibility",
    "AdmissibilityReport",
    "F_field",
    "LinearCoefficients",
    "linear_coefficients",
    "linearized_apply",
    "z_field",
    "z_independence_check",
    "second_order_ratio",
    "potential_part",
    "F_and_eigenvalues",
]


class DomainError(ValueError):
    """Eigenvalues outside the admissible cone (some ``lambda~_i <= 0``)."""


# ---------------------------------------------------------------------------
# pointwise algebra


def trace(x: np.ndarray, metric: np.ndarray | None = None) -> np.ndarray:
    """``tr_alpha x = alpha^{i jbar} x_{i jbar}`` (plain trace if ``metric`` is None)."""
    if metric is None:
        return np.trace(x, axis1=-2, axis2=-1)
    return np.trace(np.linalg.solve(metric, x), axis1=-2, axis2=-1)


def _eye_like(x: np.ndarray, metric: np.ndarray | None) -> np.ndarray:
    if metric is not None:
        return metric
    return np.broadcast_to(np.eye(x.shape[-1]), x.shape)


def t_map(x: np.ndarray, metric: np.ndarray | None = None) -> np.ndarray:
    """``T(x) = tr_alpha(x) alpha - (n-1) x``."""
    n = x.shape[-1]
    return trace(x, metric)[..., None, None] * _eye_like(x, metric) - (n - 1) * x


def t_inverse(y: np.ndarray, metric: np.ndarray | None = None) -> np.ndarray:
    """``T^{-1}(y) = (tr_alpha(y) alpha - y)/(n-1)``."""
    n = y.shape[-1]
    return (trace(y, metric)[..., None, None] * _eye_like(y, metric) - y) / (n - 1)


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalues ``lambda`` (descending) and ``lambda~_i = (sum lambda - lambda_i)/(n-1)``.

    Arrays may carry leading batch axes; the last axis has length ``n``.
    """

    lam: np.ndarray
    lam_tilde: np.ndarray

    @classmethod
    def from_lambda(cls, lam) -> "EigenPair":
        lam = -np.sort(-np.asarray(lam, dtype=float), axis=-1, kind="stable")
        n = lam.shape[-1]
        lt = (lam.sum(axis=-1, keepdims=True) - lam) / (n - 1)
        return cls(lam, lt)

    @classmethod
    def from_lambda_tilde(cls, lam_tilde) -> "EigenPair":
        lt = np.sort(np.asarray(lam_tilde, dtype=float), axis=-1, kind="stable")
        n = lt.shape[-1]
        lam = lt.sum(axis=-1, keepdims=True) - (n - 1) * lt
        return cls(lam, lt)

    @property
    def n(self) -> int:
        return self.lam.shape[-1]

    def admissible(self) -> np.ndarray:
        return np.all(self.lam_tilde > 0, axis=-1)


@dataclass(frozen=True)
class CoefficientSet:
    """``f~_k = 1/lambda~_k``, ``f_k = dF/dlambda_k`` and ``script_F = sum_k f_k``."""

    f: np.ndarray
    f_tilde: np.ndarray
    script_F: np.ndarray


def _require_cone(pair: EigenPair):
    if not np.all(pair.admissible()):
        raise DomainError(f"lambda~ has non-positive entries (min {np.min(pair.lam_tilde):.3e})")


def F_value(pair: EigenPair) -> np.ndarray:
    """``F(lambda) = sum_k log lambda~_k``."""
    _require_cone(pair)
    return np.sum(np.log(pair.lam_tilde), axis=-1)


def coefficients(pair: EigenPair) -> CoefficientSet:
    """Derivative coefficients ``f_k = (1/(n-1)) sum_{i != k} 1/lambda~_i`` (aligned with ``pair.lam``)."""
    _require_cone(pair)
    n = pair.n
    ft = 1.0 / pair.lam_tilde
    # lam is descending and lam_tilde ascending, so lam_k pairs with lam_tilde_k
    f = (ft.sum(axis=-1, keepdims=True) - ft) / (n - 1)
    return CoefficientSet(f, ft, f.sum(axis=-1))


def kappa_estimate(tau: float, rhs_sup: float, n: int) -> float:
    """``kappa = min(tau/2, n exp(-rhs_sup/n)/2)`` with ``rhs_sup = sup|(n-1)(h+b)|``."""
    return min(tau / 2.0, n * math.exp(-rhs_sup / n) / 2.0)


def dichotomy(pair: EigenPair, chi_diag: np.ndarray, kappa: float) -> dict:
    """Which alternative of the coefficient dichotomy holds.

    ``first``: ``sum_k f_k (chi_kk - lambda_k) >= kappa sum_k f_k``;
    ``second``: ``f_k >= kappa sum_i f_i`` for every ``k``.
    ``chi_diag`` holds the diagonal of ``chi`` in the eigenframe of ``omega``, aligned with ``pair.lam``.
    """
    c = coefficients(pair)
    first = np.sum(c.f * (chi_diag - pair.lam), axis=-1) >= kappa * c.script_F
    second = np.all(c.f >= kappa * c.script_F[..., None], axis=-1)
    return {"first": first, "second": second, "either": first | second, "lower": c.script_F > kappa}


# ---------------------------------------------------------------------------
# background context


@dataclass(frozen=True)
class OperatorContext:
    """Background data of the equation, precomputed once.

    Attributes
    ----------
    grid : TorusGrid
    alpha, omega0 : ndarray
        Background and balanced reference metrics.
    chi_tilde, B_tilde : ndarray
        ``*(omega0^{n-1})/(n-1)!`` and ``*(i ddbar alpha^{n-2})/(n-1)!``.
    Z : ndarray
        ``Z[..., k, i, j]`` with ``Z(dphi) = sum_k phi_k Z^k + h.c.``.
    chi, B, W : ndarray
        T-images of ``chi_tilde``, ``B_tilde`` and each ``Z^k``.
    h, h0 : ndarray
        Target data at ``t = 1`` and the exact-start data ``F(chi_tilde)/(n-1)``.
    t : float
        Continuation weight.
    A : float
        Normalization mass, ``int e^phi alpha^n = A`` with ``int alpha^n = 1``.
    weights : ndarray
        Quadrature weights of ``alpha^n`` normalized to total mass one.
    """

    grid: TorusGrid
    alpha: np.ndarray
    omega0: np.ndarray
    chi_tilde: np.ndarray
    B_tilde: np.ndarray
    Z: np.ndarray
    chi: np.ndarray
    B: np.ndarray
    W: np.ndarray
    h: np.ndarray
    h0: np.ndarray
    t: float
    A: float
    weights: np.ndarray
    logdet_alpha: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False, default=None)
    star: forms.StarOperator = field(repr=False, default=None)
    potential_symbols: np.ndarray = field(repr=False, default=None)
    potential_table: np.ndarray = field(repr=False, default=None)
    alpha_chol_inv: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.grid.n

    def at(self, t: float) -> "OperatorContext":
        return replace(self, t=float(t))

    def with_data(self, h=None, A=None) -> "OperatorContext":
        out = self
        if h is not None:
            out = replace(out, h=np.broadcast_to(np.asarray(h, dtype=float), self.grid.shape).copy())
        if A is not None:
            out = replace(out, A=float(A))
        return out

    def integrate(self, f: np.ndarray) -> float:
        """``int f alpha^n`` with ``int alpha^n = 1``."""
        return float(np.sum(self.weights * f))

    def rhs(self, b: float) -> np.ndarray:
        """``(n-1)(t h + (1-t) h0 + b)``."""
        return (self.n - 1) * (self.t * self.h + (1 - self.t) * self.h0 + b)

    def B_tilde_max(self) -> float:
        """Largest eigenvalue of ``B~`` relative to ``alpha`` over the grid."""
        return float(np.max(geometry.eigenvalues(self.B_tilde, self.alpha)))

    def B_tilde_norm(self) -> float:
        """``sup |B~|_alpha`` (largest-magnitude relative eigenvalue)."""
        return float(np.max(np.abs(geometry.eigenvalues(self.B_tilde, self.alpha))))

    def tau(self) -> float:
        """Smallest eigenvalue of ``chi~`` relative to ``alpha``."""
        return float(np.min(geometry.eigenvalues(self.chi_tilde, self.alpha)))


def z_field(alpha: HermitianField) -> np.ndarray:
    """``Z^k_{i jbar}`` from ``*(i dz_k ^ dbar alpha^{n-2})/(n-1)!`` via the first-principles star."""
    grid, A = alpha.grid, alpha.values
    n = grid.n
    D = geometry.d_antiholo(grid, forms.power(forms.from_hermitian(A), n - 2))
    out = np.zeros(grid.shape + (n, n, n), dtype=complex)
    for k in grid.active_coords:
        e = np.zeros((n, 1), dtype=complex)
        e[k, 0] = 1j
        top = forms.wedge(forms.MultiIndexForm(n, 1, 0, e), D)
        out[..., k, :, :] = forms.star_to_hermitian(top, A, check=False) / math.factorial(n - 1)
    return out


def build_context(
    alpha: HermitianField,
    omega0: HermitianField | None = None,
    h=0.0,
    A: float = 1e-2,
    t: float = 1.0,
) -> OperatorContext:
    """Precompute ``chi~``, ``B~``, the ``Z``/``W`` tensors and ``h0`` for a background."""
    grid, Av = alpha.grid, alpha.values
    n = grid.n
    geometry._require_positive(grid, Av)
    if omega0 is None:
        omega0 = geometry.constant_metric(grid)
    geometry._require_positive(grid, omega0.values, "omega0")
    if A <= 0:
        raise ValueError("normalization mass A must be positive")
    fact = math.factorial(n - 1)
    star = forms.StarOperator(Av, n - 1, n - 1, check=False)
    top = forms.power(forms.from_hermitian(omega0.values), n - 1)
    chi_t = hermitian_part(forms.to_hermitian(star(top))) / fact
    P = forms.power(forms.from_hermitian(Av), n - 2).coeffs
    syms, table = _potential_operators(grid)
    B_t = _star_ddbar_product(grid, P, star, syms, table, np.ones(grid.shape))
    Z = z_field(alpha)
    W = np.stack([t_map(Z[..., k, :, :], Av) for k in range(n)], axis=-3)
    logdet_a = np.linalg.slogdet(Av)[1]
    h0 = (np.linalg.slogdet(chi_t)[1] - logdet_a) / (n - 1)
    det = np.exp(logdet_a)
    weights = det / det.sum()
    hv = np.broadcast_to(np.asarray(h, dtype=float), grid.shape).copy()
    return OperatorContext(
        grid, Av, omega0.values, chi_t, B_t, Z, t_map(chi_t, Av), t_map(B_t, Av), W,
        hv, h0, float(t), float(A), weights, logdet_a, P, star, syms, table,
        np.linalg.inv(np.linalg.cholesky(Av)),
    )


# ---------------------------------------------------------------------------
# assembly


@lru_cache(maxsize=None)
def _wedge_table(n: int, active: tuple) -> np.ndarray:
    """``T[s, I, J, P, Q]``: coefficients of ``i dz_a ^ dzbar_b ^ e_{IJ}`` for the ``s``-th active pair."""
    c = math.comb(n, n - 2)
    rows = []
    for a in active:
        for b in active:
            e = np.zeros((n, n), dtype=complex)
            e[a, b] = 1j
            unit = np.zeros((c, c, c, c), dtype=complex)
            for I in range(c):
                for J in range(c):
                    unit[I, J, I, J] = 1.0
            rows.append(forms.wedge(forms.MultiIndexForm(n, 1, 1, e), forms.MultiIndexForm(n, n - 2, n - 2, unit)).coeffs)
    return np.stack(rows)


def _potential_operators(grid: TorusGrid):
    """Stacked ``d_a dbar_b`` symbols over active pairs and the matching wedge table."""
    syms = np.stack([grid.second_symbol(a, b) for a in grid.active_coords for b in grid.active_coords])
    return syms, _wedge_table(grid.n, grid.active_coords)


def _star_ddbar_product(grid, P, star, syms, table, f) -> np.ndarray:
    """``*(i ddbar(f P))/(n-1)!`` as a Hermitian matrix field, ``P`` an (n-2,n-2) coefficient field.

    The wedge with ``i dz_a ^ dzbar_b`` is applied in Fourier space, so only one forward and
    one inverse transform per coefficient are needed.
    """
    n = grid.n
    Fh = grid.fft(np.asarray(f)[..., None, None] * P)
    Y = np.einsum("s...IJ,sIJPQ->...PQ", syms[..., None, None] * Fh, table, optimize=True)
    acc = forms.MultiIndexForm(n, n - 1, n - 1, grid.ifft(Y))
    return hermitian_part(forms.to_hermitian(star(acc))) / math.factorial(n - 1)


def potential_part(ctx: OperatorContext, phi: np.ndarray) -> np.ndarray:
    """``*(i ddbar(phi alpha^{n-2}))/(n-1)! - (1-t) phi B~`` (linear in ``phi``)."""
    phi = np.asarray(phi, dtype=float)
    out = _star_ddbar_product(ctx.grid, ctx.P, ctx.star, ctx.potential_symbols, ctx.potential_table, phi)
    if ctx.t != 1.0:
        out = out - (1.0 - ctx.t) * phi[..., None, None] * ctx.B_tilde
    return out


def _z_apply(Z: np.ndarray, dphi: np.ndarray) -> np.ndarray:
    m = np.einsum("...k,...kij->...ij", dphi, Z)
    return m + np.conj(np.swapaxes(m, -1, -2))


def assemble_omega_tilde(ctx: OperatorContext, phi: np.ndarray, conservative: bool = True) -> np.ndarray:
    """``chi~ + (Delta phi A - ddbar phi)/(n-1) + Z(dphi) + t phi B~``.

    ``conservative=True`` (the solver's discretization) uses :func:`potential_part`;
    ``False`` evaluates the product-rule expression term by term.
    """
    if conservative:
        return hermitian_part(ctx.chi_tilde + potential_part(ctx, phi))
    grid, n = ctx.grid, ctx.n
    phi = np.asarray(phi, dtype=float)
    H = grid.ddbar(phi)
    lap = trace(H, ctx.alpha)
    out = ctx.chi_tilde + (lap[..., None, None] * ctx.alpha - H) / (n - 1)
    out = out + _z_apply(ctx.Z, grid.grad(phi)) + ctx.t * phi[..., None, None] * ctx.B_tilde
    return hermitian_part(out)


def assemble_omega(ctx: OperatorContext, phi: np.ndarray) -> np.ndarray:
    """``chi + ddbar phi + W(dphi) + t phi B`` (equals ``T(omega~)``)."""
    grid = ctx.grid
    phi = np.asarray(phi, dtype=float)
    out = ctx.chi + grid.ddbar(phi) + _z_apply(ctx.W, grid.grad(phi)) + ctx.t * phi[..., None, None] * ctx.B
    return hermitian_part(out)


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    min_eigenvalue: float
    location: tuple


def admissibility(omega_tilde: np.ndarray, alpha: np.ndarray, margin: float = 0.0) -> AdmissibilityReport:
    """True iff ``min lambda_min(alpha^{-1} omega~) > margin`` over the grid."""
    lam = geometry.eigenvalues(omega_tilde, alpha)[..., 0]
    idx = np.unravel_index(int(np.argmin(lam)), lam.shape) if lam.ndim else ()
    m = float(np.min(lam))
    return AdmissibilityReport(m > margin, m, tuple(int(i) for i in idx))


def F_and_eigenvalues(ctx: OperatorContext, omega_tilde: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(sum log lambda~, lambda~)`` with ``lambda~`` ascending relative to ``alpha``.

    Raises :class:`DomainError` off the cone.
    """
    Li = ctx.alpha_chol_inv
    lam = np.linalg.eigvalsh(hermitian_part(Li @ omega_tilde @ np.conj(np.swapaxes(Li, -1, -2))))
    if np.min(lam) <= 0:
        raise DomainError(f"omega~ not positive (min relative eigenvalue {np.min(lam):.3e})")
    return np.sum(np.log(lam), axis=-1), lam


def F_field(ctx: OperatorContext, omega_tilde: np.ndarray) -> np.ndarray:
    """Pointwise ``log det(A^{-1} omega~)``; raises :class:`DomainError` off the cone."""
    return F_and_eigenvalues(ctx, omega_tilde)[0]


# ---------------------------------------------------------------------------
# linearization


@dataclass(frozen=True)
class LinearCoefficients:
    """``L psi = K^{lk} psi_{k lbar} + 2 Re(d^k psi_k) + e psi`` at a fixed state.

    ``K[..., l, k]`` multiplies ``d_k dbar_l psi``; ``drift[..., k]`` multiplies ``d_k psi``.
    ``G`` is ``omega~^{-1}``, used by the conservative application.
    """

    G: np.ndarray
    K: np.ndarray
    drift: np.ndarray
    zeroth: np.ndarray


def linear_coefficients(ctx: OperatorContext, omega_tilde: np.ndarray) -> LinearCoefficients:
    """Coefficients of ``L psi = tr(omega~^{-1} d omega~[psi])``."""
    n = ctx.n
    G = np.linalg.inv(omega_tilde)
    Ainv = np.linalg.inv(ctx.alpha)
    trGA = np.trace(G @ ctx.alpha, axis1=-2, axis2=-1)
    K = (trGA[..., None, None] * Ainv - G) / (n - 1)
    drift = np.einsum("...ji,...kij->...k", G, ctx.Z)
    zeroth = ctx.t * np.einsum("...ji,...ij->...", G, ctx.B_tilde).real
    return LinearCoefficients(G, K, drift, zeroth)


def linearized_apply(
    ctx: OperatorContext,
    phi: np.ndarray,
    psi: np.ndarray,
    coeffs: LinearCoefficients | None = None,
    conservative: bool = True,
) -> np.ndarray:
    """``d/ds F(omega~(phi + s psi))`` at ``s = 0``.

    Conservative form: ``tr(omega~^{-1} potential_part(psi))``; otherwise the coefficient form
    ``K^{lk} psi_{k lbar} + 2 Re(drift^k psi_k) + zeroth psi``.
    """
    if coeffs is None:
        wt = assemble_omega_tilde(ctx, phi, conservative)
        F_field(ctx, wt)
        coeffs = linear_coefficients(ctx, wt)
    psi = np.asarray(psi, dtype=float)
    if conservative:
        return np.einsum("...ji,...ij->...", coeffs.G, potential_part(ctx, psi)).real
    grid = ctx.grid
    H = grid.ddbar(psi)
    second = np.einsum("...lk,...kl->...", coeffs.K, H)
    first = np.einsum("...k,...k->...", coeffs.drift, grid.grad(psi))
    return (second + 2 * first).real + coeffs.zeroth * psi


# ---------------------------------------------------------------------------
# structural checks


def z_independence_check(ctx: OperatorContext) -> dict:
    """Diagonal coefficients ``Z^i_{i ibar}`` in the pointwise ``alpha``-orthonormal frame.

    In coordinates ``w = L^T z`` (``alpha = L L^H``) the metric is the identity and the tensor
    becomes ``Z'^a = sum_k L_{ka} L^{-1} Z^k L^{-H}``.
    """
    n = ctx.n
    L = np.linalg.cholesky(ctx.alpha)
    Li = np.linalg.inv(L)
    LiH = np.conj(np.swapaxes(Li, -1, -2))
    Zf = np.einsum("...ij,...kjl,...lm->...kim", Li, ctx.Z, LiH)
    Zw = np.einsum("...ka,...kij->...aij", L, Zf)
    diag = np.stack([Zw[..., i, i, i] for i in range(n)], axis=-1)
    return {
        "max_violation": float(np.max(np.abs(diag))) if diag.size else 0.0,
        "max_coefficient": float(np.max(np.abs(ctx.Z))) if ctx.Z.size else 0.0,
        "constant_background": bool(np.max(np.abs(ctx.alpha - ctx.alpha.reshape(-1, n, n)[0])) == 0.0),
    }


def second_order_ratio(ctx: OperatorContext, phi: np.ndarray) -> tuple[float, float, float]:
    """``(rho, C2, K)`` with ``C2 = sup|ddbar phi|_alpha``, ``K = sup|dphi|^2_alpha + 1`` and ``rho = C2/K``.

    ``|ddbar phi|_alpha`` is the largest-magnitude eigenvalue of ``alpha^{-1} ddbar phi``.
    """
    grid = ctx.grid
    phi = np.asarray(phi, dtype=float)
    H = hermitian_part(grid.ddbar(phi))
    c2 = float(np.max(np.abs(geometry.eigenvalues(H, ctx.alpha))))
    g = grid.grad(phi)
    Ainv = np.linalg.inv(ctx.alpha)
    grad2 = np.einsum("...ji,...i,...j->...", Ainv, g, np.conj(g)).real
    K = float(np.max(grad2)) + 1.0
    return c2 / K, c2, K
