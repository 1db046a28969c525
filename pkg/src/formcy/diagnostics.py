"""Numerical checks of the a priori estimates and geometric conclusions.

The analytic constants are non-effective, so bounds are tested as uniform over controlled
families of runs rather than against fixed numbers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import geometry
from .geometry import HermitianField
from .operator import (
    DomainError,
    OperatorContext,
    admissibility,
    assemble_omega_tilde,
    F_field,
)
from .operator import second_order_ratio as _ratio
from .solver import (
    MarchFailure,
    SolutionState,
    SolverConfig,
    SolverError,
    continuity_march,
    recover_metric,
    residual,
)

__all__ = [
    "Inadmissible",
    "Manufactured",
    "manufacture",
    "EstimateReport",
    "ScanRow",
    "ScanResult",
    "moser_scan",
    "second_order_ratio",
    "geometry_certificates",
    "infimum_and_l1_report",
    "worker_count",
]


class Inadmissible(DomainError):
    """Input outside the ellipticity cone; ``min_eigenvalue`` is the offending value."""

    def __init__(self, msg, min_eigenvalue=math.nan, location=()):
        super().__init__(msg)
        self.min_eigenvalue = min_eigenvalue
        self.location = location


@dataclass(frozen=True)
class Manufactured:
    h: np.ndarray
    A: float
    residual_sup: float


def manufacture(ctx: OperatorContext, phi_star: np.ndarray, margin: float = 0.0) -> Manufactured:
    """Data ``h = F(omega~(phi*))/(n-1)`` and ``A* = int e^{phi*}`` so that ``(phi*, 0)`` solves at ``t = 1``.

    ``phi*`` is first restricted to the resolved modes (the solver's unknown space).
    """
    c1 = ctx.at(1.0)
    phi_star = ctx.grid.resolve(np.asarray(phi_star, dtype=float))
    wt = assemble_omega_tilde(c1, phi_star)
    rep = admissibility(wt, ctx.alpha, margin)
    if not rep.admissible:
        raise Inadmissible(
            f"phi* is inadmissible: min eigenvalue of omega~ is {rep.min_eigenvalue:.3e} at {rep.location}",
            rep.min_eigenvalue,
            rep.location,
        )
    h = F_field(c1, wt) / (ctx.n - 1)
    A = c1.integrate(np.exp(phi_star))
    r = residual(c1.with_data(h=h, A=A), phi_star, 0.0, collocation=True)
    return Manufactured(h, A, float(np.max(np.abs(r))))


def second_order_ratio(ctx: OperatorContext, state: SolutionState) -> float:
    """``sup|ddbar phi|_alpha / (sup|dphi|^2_alpha + 1)``."""
    return _ratio(ctx, state.phi)[0]


def infimum_and_l1_report(ctx: OperatorContext, state: SolutionState) -> tuple[float, float]:
    """``(inf phi, int |phi| alpha^n)``."""
    return float(np.min(state.phi)), ctx.integrate(np.abs(state.phi))


@dataclass(frozen=True)
class EstimateReport:
    """Per-run estimate and certificate quantities."""

    sup_phi: float
    inf_phi: float
    l1_phi: float
    b: float
    K: float
    C2: float
    rho: float
    balanced_defect: float
    balanced_defect_omega0: float
    ricci_prescription_error: float
    ricci_sup: float
    bismut_gap: float
    residual_sup: float
    collocation_sup: float

    def as_dict(self) -> dict:
        return asdict(self)


def geometry_certificates(ctx: OperatorContext, state: SolutionState) -> EstimateReport:
    """Recover ``omega^`` and measure balancedness, Ricci prescription and the Bismut gap.

    ``ricci_prescription_error = sup|Ric(omega^) - Ric(alpha) + ddbar h|`` and ``ricci_sup =
    sup|Ric(omega^)|`` (the Calabi-Yau certificate when ``h = -log det alpha``).
    """
    if abs(state.t - 1.0) > 0 or not math.isfinite(state.residual_sup):
        raise SolverError("certificates need a converged state at t = 1")
    c1 = ctx.at(1.0)
    grid = ctx.grid
    wt = assemble_omega_tilde(c1, state.phi)
    omega_hat = HermitianField(grid, recover_metric(wt, ctx.alpha))
    ric_hat = geometry.chern_ricci_form(omega_hat).values
    ric_a = geometry.chern_ricci_form(HermitianField(grid, ctx.alpha)).values
    target = ric_a - grid.ddbar(ctx.h)
    bis = geometry.bismut_ricci(omega_hat).values
    rho, c2, K = _ratio(ctx, state.phi)
    inf_phi, l1 = infimum_and_l1_report(ctx, state)
    r = residual(c1, state.phi, state.b)
    raw = residual(c1, state.phi, state.b, collocation=True)
    return EstimateReport(
        sup_phi=float(np.max(state.phi)),
        inf_phi=inf_phi,
        l1_phi=l1,
        b=state.b,
        K=K,
        C2=c2,
        rho=rho,
        balanced_defect=geometry.balanced_defect(omega_hat),
        balanced_defect_omega0=geometry.balanced_defect(HermitianField(grid, ctx.omega0)),
        ricci_prescription_error=float(np.max(np.abs(ric_hat - target))),
        ricci_sup=float(np.max(np.abs(ric_hat))),
        bismut_gap=float(np.max(np.abs(bis - ric_hat))),
        residual_sup=float(np.max(np.abs(r))),
        collocation_sup=float(np.max(np.abs(raw))),
    )


# ---------------------------------------------------------------------------
# A-scan


@dataclass(frozen=True)
class ScanRow:
    A: float
    sup_phi: float
    sup_phi_plus: float
    max_sup_along_march: float
    b: float
    rho: float
    inf_phi: float
    l1_phi: float
    bound: float = math.nan


@dataclass
class ScanResult:
    """Scan rows (``A`` strictly decreasing) and the fitted constants.

    ``M_hat = max sup(phi)_+ / A^{1/(n+1)}``; ``exponent`` is the least-squares slope of
    ``log sup(phi)_+`` against ``log A`` over rows with positive ``sup(phi)_+`` (``nan`` with
    fewer than two such rows, flagged by ``degenerate``); ``C_linear = max sup(phi)_+ / A``.
    """

    n: int
    rows: list
    M_hat: float
    exponent: float
    fit_residual: float
    C_linear: float
    degenerate: bool
    sup_le_one: bool
    max_rho: float
    traces: list = field(default_factory=list, repr=False)
    failure: str | None = None

    def bound_holds(self, tol: float = 1e-12) -> bool:
        return all(r.sup_phi_plus <= self.M_hat * r.A ** (1.0 / (self.n + 1)) + tol for r in self.rows)


def worker_count() -> int:
    """Worker pool size from ``FORMCY_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("FORMCY_THREADS", "1")))
    except ValueError:
        return 1


def moser_scan(ctx: OperatorContext, A_list, config: SolverConfig | None = None) -> ScanResult:
    """Full continuity marches for each ``A``; records ``sup(phi)_+`` and fits the scaling law."""
    A_list = [float(a) for a in A_list]
    if any(b >= a for a, b in zip(A_list, A_list[1:])):
        raise ValueError("A-list must be strictly decreasing")
    if any(a <= 0 for a in A_list):
        raise ValueError("A-list entries must be positive")
    config = config or SolverConfig()
    n = ctx.n

    def run(A):
        cfg = SolverConfig(**{**asdict(config), "A": A})
        return continuity_march(ctx, cfg)

    rows, traces, failure = [], [], None
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        futures = [pool.submit(run, A) for A in A_list]
        for A, fut in zip(A_list, futures):
            try:
                state, trace = fut.result()
            except (MarchFailure, SolverError) as exc:
                failure = f"A={A:g}: {exc}"
                traces.append(getattr(exc, "trace", []))
                break
            c = ctx.with_data(A=A)
            inf_phi, l1 = infimum_and_l1_report(c, state)
            sup = float(np.max(state.phi))
            rows.append(ScanRow(A, sup, max(sup, 0.0), max(r["sup_phi"] for r in trace), state.b,
                                _ratio(c, state.phi)[0], inf_phi, l1))
            traces.append(trace)
    p = 1.0 / (n + 1)
    M_hat = max((r.sup_phi_plus / r.A**p for r in rows), default=0.0)
    rows = [ScanRow(**{**asdict(r), "bound": M_hat * r.A**p}) for r in rows]
    pos = [r for r in rows if r.sup_phi_plus > 0]
    if len(pos) >= 2:
        x = np.log([r.A for r in pos])
        y = np.log([r.sup_phi_plus for r in pos])
        coef, res, *_ = np.polyfit(x, y, 1, full=True)
        exponent = float(coef[0])
        fit_res = float(math.sqrt(res[0] / len(pos))) if len(res) else 0.0
        degenerate = False
    else:
        exponent, fit_res, degenerate = math.nan, math.nan, True
    return ScanResult(
        n=n,
        rows=rows,
        M_hat=M_hat,
        exponent=exponent,
        fit_residual=fit_res,
        C_linear=max((r.sup_phi_plus / r.A for r in rows), default=0.0),
        degenerate=degenerate,
        sup_le_one=all(r.max_sup_along_march <= 1.0 for r in rows),
        max_rho=max((r.rho for r in rows), default=0.0),
        traces=traces,
        failure=failure,
    )
