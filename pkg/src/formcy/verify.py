"""Oracle-equivalence suites for the Hodge star formulas and the astheno-Ricci closed form.

Each case compares a closed form (or a structural identity) with the first-principles
star of :mod:`formcy.forms` and records the worst relative sup error.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import forms, geometry
from .grid import TorusGrid

__all__ = ["CaseResult", "VerifyReport", "relative_error", "star_suite", "astheno_suite", "background_case"]


@dataclass(frozen=True)
class CaseResult:
    name: str
    error: float
    tolerance: float
    count: int = 1

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tolerance)

    def as_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


@dataclass
class VerifyReport:
    cases: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cases)

    def failures(self) -> list:
        return [c for c in self.cases if not c.passed]

    def worst(self) -> CaseResult | None:
        return max(self.cases, key=lambda c: c.error / c.tolerance, default=None)


def relative_error(value: np.ndarray, reference: np.ndarray) -> float:
    """``sup|value - reference| / sup|reference|``; absolute when the reference vanishes."""
    err = float(np.max(np.abs(np.asarray(value) - np.asarray(reference)), initial=0.0))
    scale = float(np.max(np.abs(reference), initial=0.0))
    return err / scale if scale > 0 else err


def _random_metric(rng, n: int, batch=()) -> np.ndarray:
    M = rng.normal(size=batch + (n, n)) + 1j * rng.normal(size=batch + (n, n))
    return M @ np.conj(np.swapaxes(M, -1, -2)) + n * np.eye(n)


def _random_form(rng, n: int, p: int, q: int, batch=()) -> forms.MultiIndexForm:
    shape = batch + (math.comb(n, p), math.comb(n, q))
    return forms.MultiIndexForm(n, p, q, rng.normal(size=shape) + 1j * rng.normal(size=shape))


def _random_real_pp(rng, n: int, p: int, batch=(), terms: int = 3) -> forms.MultiIndexForm:
    """Sum of wedge products of random real (1,1)-forms."""
    out = forms.zero(n, p, p, batch)
    for _ in range(terms):
        f = forms.one(n, batch)
        for _k in range(p):
            H = rng.normal(size=batch + (n, n)) + 1j * rng.normal(size=batch + (n, n))
            f = forms.wedge(f, forms.from_hermitian(H + np.conj(np.swapaxes(H, -1, -2))))
        out = out + f
    return out


def star_suite(n_list=(3, 4), cases: int = 20, tol: float = 1e-8, seed: int = 0, sign_flip: bool = False) -> list:
    """Pointwise star checks: involution signs, the two anchors, and the (2,2)/(3,3) closed forms.

    ``sign_flip`` corrupts the expected involution sign (negative control).
    """
    rng = np.random.default_rng(seed)
    out = []
    for n in n_list:
        g = _random_metric(rng, n, (cases,))
        for p in range(n + 1):
            for q in range(n + 1):
                f = _random_form(rng, n, p, q, (cases,))
                sign = (-1) ** (p + q) * (-1 if sign_flip else 1)
                twice = forms.star_oracle(forms.star_oracle(f, g), g)
                out.append(CaseResult(f"star-involution n={n} ({p},{q})", relative_error(twice.coeffs, sign * f.coeffs), tol, cases))
        vol = forms.volume_form(g)
        out.append(CaseResult(f"star-anchor-volume n={n}", relative_error(forms.star_oracle(forms.one(n, (cases,)), g).coeffs, vol.coeffs), tol, cases))
        top = forms.power(forms.from_hermitian(g), n - 1)
        got = forms.star_to_hermitian(top, g) / math.factorial(n - 1)
        out.append(CaseResult(f"star-anchor-metric n={n}", relative_error(got, g), tol, cases))
        phi = _random_real_pp(rng, n, 2, (cases,))
        ref = forms.star_to_hermitian(forms.wedge(phi, forms.power(forms.from_hermitian(g), n - 3)), g)
        out.append(CaseResult(f"star22-closed-form n={n}", relative_error(forms.star_22_closed_form(phi, g), ref), tol, cases))
        if n >= 4:
            psi = _random_real_pp(rng, n, 3, (cases,))
            ref = forms.star_to_hermitian(forms.wedge(psi, forms.power(forms.from_hermitian(g), n - 4)), g)
            out.append(CaseResult(f"star33-closed-form n={n}", relative_error(forms.star_33_closed_form(psi, g), ref), tol, cases))
    return out


def astheno_grid(n: int, N: int | None = None) -> TorusGrid:
    """Grid for the astheno suite: two active coordinates for ``n = 3``, one otherwise.

    The oracle differentiates the grid product ``alpha^{n-2}``; with metric modes ``|k| <= 2``
    that product has modes up to ``2(n-2)``, so the default ``N = max(8, 4(n-2)+2)`` keeps it
    below Nyquist.
    """
    N = max(8, 4 * (n - 2) + 2) if N is None else N
    return TorusGrid.uniform(n, N, active=(0, 1) if n == 3 else (0,))


def astheno_suite(n_list=(3, 4), cases: int = 20, tol: float = 1e-8, seed: int = 0, N: int | None = None) -> list:
    """Closed-form astheno-Ricci against the oracle on ``cases`` frozen random periodic metrics per ``n``.

    Metric ``j`` uses seed ``seed + j``; the reported error is the worst over the family.
    """
    out = []
    for n in n_list:
        grid = astheno_grid(n, N)
        worst = 0.0
        for j in range(cases):
            alpha = geometry.random_metric(grid, seed + j)
            worst = max(worst, relative_error(geometry.astheno_ricci(alpha).values, geometry.astheno_ricci_oracle(alpha).values))
        out.append(CaseResult(f"astheno-ricci n={n}", worst, tol, cases))
    return out


def background_case(alpha: geometry.HermitianField, tol: float = 1e-8, label: str = "background") -> CaseResult:
    """Closed form against the oracle on a configured background."""
    err = relative_error(geometry.astheno_ricci(alpha).values, geometry.astheno_ricci_oracle(alpha).values)
    return CaseResult(f"astheno-ricci {label} n={alpha.grid.n}", err, tol)
