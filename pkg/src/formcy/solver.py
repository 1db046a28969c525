"""Continuity-method solver for the normalized form-type Calabi-Yau equation.

The family solved for ``t`` in ``[0, 1]`` is

    F(omega~(phi)) = (n-1)(t h + (1-t) h0 + b),    int e^phi alpha^n = A,

starting from the exact solution ``phi = log A``, ``b = 0`` at ``t = 0``.  Each Newton step
solves the bordered system

    L psi - (n-1) db = -r,    int e^phi psi alpha^n = 0

matrix-free with GMRES and a constant-coefficient Fourier preconditioner, then restores
the normalization exactly by a constant shift of ``phi``.

Unknowns and equations live on the resolved modes (see :meth:`TorusGrid.resolve`).  The
dropped checkerboard modes are annihilated by every spectral derivative, so ``phi`` carries
none and the residual is driven to zero on the rest.  The collocation residual then differs
from it only by content that no derivative sees.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import geometry
from .geometry import HermitianField
from .operator import (
    DomainError,
    OperatorContext,
    assemble_omega_tilde,
    F_and_eigenvalues,
    F_field,
    linear_coefficients,
    linearized_apply,
    second_order_ratio,
)

__all__ = [
    "SolverConfig",
    "SolutionState",
    "SolverError",
    "StepFailure",
    "MarchFailure",
    "initial_state",
    "seed_state",
    "mass",
    "project",
    "residual",
    "newton_step",
    "newton_solve",
    "continuity_march",
    "recover_metric",
    "b_bounds",
    "a0_rule",
    "uniqueness_probe",
    "trace_record",
]


class SolverError(RuntimeError):
    pass


class StepFailure(SolverError):
    """A Newton iteration could not make progress (triggers a smaller t-step)."""


class MarchFailure(SolverError):
    """The t-step underflowed; ``trace`` and ``state`` hold the progress made."""

    def __init__(self, msg, trace=None, state=None):
        super().__init__(msg)
        self.trace = trace or []
        self.state = state


@dataclass(frozen=True)
class SolverConfig:
    """Continuation and Newton parameters.

    ``eps_pos`` is relative: an iterate is rejected when ``min lambda~ < eps_pos * n``
    (``n = tr_alpha alpha``).
    """

    A: float = 1e-2
    t_step: float = 0.1
    t_step_min: float = 1e-4
    grow: float = 1.5
    shrink: float = 0.5
    tol: float = 1e-10
    max_newton: int = 12
    armijo: float = 1e-4
    s_min: float = 2.0**-10
    eps_pos: float = 1e-8
    gmres_rtol: float = 1e-12
    gmres_restart: int = 60
    gmres_maxiter: int = 20
    dense_limit: int = 1024
    m_hat: float = 1.0

    def __post_init__(self):
        if self.A <= 0:
            raise ValueError("A must be positive")
        if not 0 < self.t_step_min <= self.t_step <= 1:
            raise ValueError("need 0 < t_step_min <= t_step <= 1")
        if self.tol <= 0 or self.gmres_rtol <= 0 or self.eps_pos <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.shrink < 1 or self.grow < 1:
            raise ValueError("need 0 < shrink < 1 <= grow")
        if self.max_newton < 1:
            raise ValueError("max_newton must be at least 1")


@dataclass(frozen=True)
class SolutionState:
    """An accepted iterate of the march."""

    phi: np.ndarray
    b: float
    t: float
    residual_sup: float
    margin: float
    iterations: int = 0
    mass: float = float("nan")
    collocation_sup: float = float("nan")


# ---------------------------------------------------------------------------
# state helpers


def mass(ctx: OperatorContext, phi: np.ndarray) -> float:
    """``int e^phi alpha^n`` with ``int alpha^n = 1``."""
    return ctx.integrate(np.exp(phi))


def project(ctx: OperatorContext, phi: np.ndarray) -> np.ndarray:
    """Exact constant shift onto ``int e^phi alpha^n = A``."""
    return phi - math.log(mass(ctx, phi) / ctx.A)


def residual(ctx: OperatorContext, phi: np.ndarray, b: float, collocation: bool = False) -> np.ndarray:
    """Resolved part of ``F(omega~(phi)) - (n-1)(t h + (1-t) h0 + b)``.

    ``collocation=True`` returns the pointwise residual instead.  Raises
    :class:`DomainError` off the cone.
    """
    r = F_field(ctx, assemble_omega_tilde(ctx, phi)) - ctx.rhs(b)
    return r if collocation else ctx.grid.resolve(r)


def _evaluate(ctx: OperatorContext, phi: np.ndarray, b: float):
    wt = assemble_omega_tilde(ctx, phi)
    F, lam = F_and_eigenvalues(ctx, wt)
    raw = F - ctx.rhs(b)
    margin = float(np.min(lam[..., 0]))
    return ctx.grid.resolve(raw), wt, margin, float(np.max(np.abs(raw)))


def _state(ctx, phi, b, iterations=0) -> SolutionState:
    r, _, margin, raw = _evaluate(ctx, phi, b)
    return SolutionState(phi, float(b), ctx.t, float(np.max(np.abs(r))), margin, iterations, mass(ctx, phi), raw)


def initial_state(ctx: OperatorContext) -> SolutionState:
    """The exact ``t = 0`` solution ``phi = log A``, ``b = 0``."""
    ctx0 = ctx.at(0.0)
    phi = np.full(ctx.grid.shape, math.log(ctx.A))
    return _state(ctx0, phi, 0.0)


def seed_state(ctx: OperatorContext, seed: int, amplitude: float = 0.05, b: float = 0.0, modes: int = 3) -> SolutionState:
    """``log A`` plus a random smooth low-mode perturbation, projected to the normalization."""
    rng = np.random.default_rng(seed)
    X = ctx.grid.coordinates()
    phi = np.full(ctx.grid.shape, math.log(ctx.A))
    for _ in range(modes):
        kv = rng.integers(-2, 3, size=len(X))
        if not np.any(kv):
            continue
        phase = rng.uniform(0, 2 * math.pi)
        phi = phi + amplitude * rng.normal() * np.cos(sum(int(k) * x for k, x in zip(kv, X)) + phase)
    phi = project(ctx, ctx.grid.resolve(phi))
    return _state(ctx, phi, b)


# ---------------------------------------------------------------------------
# linear solve


def _fourier_preconditioner(ctx: OperatorContext, K_mean: np.ndarray):
    grid = ctx.grid
    sym = np.zeros(grid.shape, dtype=complex)
    for k in grid.active_coords:
        for l in grid.active_coords:
            sym = sym + K_mean[l, k] * grid.second_symbol(k, l)
    sym = sym.real
    zero = np.abs(sym) < 1e-14
    inv = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, sym))
    # the system is the identity on unresolved modes
    return np.where(grid.resolved_mask(), inv, 1.0)


def _solve_bordered(ctx: OperatorContext, phi: np.ndarray, wt: np.ndarray, r: np.ndarray, config: SolverConfig):
    """Solve ``L psi - (n-1) db = -r`` with ``sum v psi = 0``; returns ``(psi, db, info)``."""
    grid, n = ctx.grid, ctx.n
    shape, N = grid.shape, grid.npoints
    coeffs = linear_coefficients(ctx, wt)
    v = ctx.weights * np.exp(phi)
    v = (v / v.sum()).ravel()

    def matvec(x):
        x = np.asarray(x).ravel()
        psi = x[:N].reshape(shape)
        kept = grid.resolve(psi)
        top = (grid.resolve(linearized_apply(ctx, phi, kept, coeffs)) + (psi - kept)).ravel() - (n - 1) * x[N]
        return np.concatenate([top, [v @ x[:N]]])

    op = LinearOperator((N + 1, N + 1), matvec=matvec, dtype=float)
    inv_sym = _fourier_preconditioner(ctx, np.mean(coeffs.K.reshape(-1, n, n), axis=0))

    def psolve(y):
        y = np.asarray(y).ravel()
        top = y[:N].reshape(shape)
        mean = float(np.mean(top))
        psi = grid.ifft(inv_sym * grid.fft(top - mean)).real.ravel()
        psi = psi + (y[N] - v @ psi)
        return np.concatenate([psi, [-mean / (n - 1)]])

    M = LinearOperator((N + 1, N + 1), matvec=psolve, dtype=float)
    rhs = np.concatenate([-r.ravel(), [0.0]])
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros(shape), 0.0, {"method": "trivial", "linear_residual": 0.0, "gmres_info": 0}
    x, info = gmres(op, rhs, rtol=config.gmres_rtol, atol=0.0, restart=config.gmres_restart,
                    maxiter=config.gmres_maxiter, M=M)
    method = "gmres"
    lin_res = float(np.linalg.norm(op.matvec(x) - rhs)) / bnorm
    if (info != 0 or lin_res > 1e3 * config.gmres_rtol) and N + 1 <= config.dense_limit:
        dense = np.column_stack([op.matvec(e) for e in np.eye(N + 1)])
        x = np.linalg.solve(dense, rhs)
        method = "dense"
        lin_res = float(np.linalg.norm(op.matvec(x) - rhs)) / bnorm
    elif info != 0 and lin_res > 1e-6:
        raise StepFailure(f"inner GMRES did not converge (relative residual {lin_res:.2e})")
    return grid.resolve(x[:N].reshape(shape)), float(x[N]), {"method": method, "linear_residual": lin_res, "gmres_info": int(info)}


# ---------------------------------------------------------------------------
# Newton and continuation


def newton_step(ctx: OperatorContext, state: SolutionState, config: SolverConfig):
    """One damped Newton step with exact re-projection; returns ``(state, info)``."""
    phi, b = state.phi, state.b
    r, wt, _, _ = _evaluate(ctx, phi, b)
    r_sup = float(np.max(np.abs(r)))
    # a residual at round-off level cannot be reduced further; treat it as zero
    if r_sup <= 100 * np.finfo(float).eps * (1.0 + float(np.max(np.abs(ctx.rhs(b))))):
        return replace(state, t=ctx.t, residual_sup=r_sup), {"step": 0.0, "psi_sup": 0.0, "db": 0.0}
    psi, db, info = _solve_bordered(ctx, phi, wt, r, config)
    floor = config.eps_pos * ctx.n
    s = 1.0
    while s >= config.s_min:
        trial = project(ctx, phi + s * psi)
        tb = b + s * db
        try:
            rt, _, margin, raw = _evaluate(ctx, trial, tb)
        except DomainError:
            s *= 0.5
            continue
        rt_sup = float(np.max(np.abs(rt)))
        if margin >= floor and rt_sup <= (1 - config.armijo * s) * r_sup:
            new = SolutionState(trial, float(tb), ctx.t, rt_sup, margin, state.iterations + 1, mass(ctx, trial), raw)
            info.update(step=s, psi_sup=float(np.max(np.abs(psi))), db=db)
            return new, info
        s *= 0.5
    raise StepFailure(f"line search failed at t={ctx.t:.6g} (residual {r_sup:.3e})")


def newton_solve(ctx: OperatorContext, state: SolutionState, config: SolverConfig, log=None) -> SolutionState:
    """Newton iterations at fixed ``ctx.t`` until the residual sup-norm is at most ``config.tol``."""
    phi = project(ctx, ctx.grid.resolve(state.phi))
    try:
        cur = _state(ctx, phi, state.b)
    except DomainError as exc:
        raise StepFailure(str(exc)) from exc
    cur = replace(cur, iterations=0)
    for _ in range(config.max_newton):
        if cur.residual_sup <= config.tol:
            return cur
        cur, info = newton_step(ctx, cur, config)
        if log is not None:
            log.append({"t": ctx.t, "residual_sup": cur.residual_sup, **info})
    if cur.residual_sup <= config.tol:
        return cur
    raise StepFailure(f"no convergence in {config.max_newton} Newton steps at t={ctx.t:.6g}")


def b_bounds(ctx: OperatorContext) -> tuple[float, float]:
    """Bounds on ``b`` from the maximum and minimum points of ``phi`` at weight ``ctx.t``.

    At a maximum ``phi >= log A`` and ``omega~ <= chi~ + t phi B~``; at a minimum the reverse.
    With ``B~ <= 0`` this gives
    ``b <= max[F(chi~ + t min(0, log A) B~)/(n-1) - t h - (1-t) h0]`` and
    ``b >= min[F(chi~ + t max(0, log A) B~)/(n-1) - t h - (1-t) h0]``.
    """
    n, t, la = ctx.n, ctx.t, math.log(ctx.A)
    base = t * ctx.h + (1 - t) * ctx.h0

    def bound(c, reduce):
        try:
            F = F_field(ctx, ctx.chi_tilde + t * c * ctx.B_tilde)
        except DomainError:
            return -math.inf if reduce is np.min else math.inf
        return float(reduce(F / (n - 1) - base))

    return bound(max(0.0, la), np.min), bound(min(0.0, la), np.max)


def a0_rule(ctx: OperatorContext, m_hat: float, kappa: float) -> float:
    """Largest ``A`` with ``m_hat A^{1/(n+1)} sup|B~| <= kappa/4`` (infinite when ``B~ = 0``)."""
    bn = ctx.B_tilde_norm()
    if bn <= 1e-12 or m_hat <= 0:
        return math.inf
    return (kappa / (4 * m_hat * bn)) ** (ctx.n + 1)


def trace_record(ctx: OperatorContext, state: SolutionState, newton_iters: int) -> dict:
    lo, hi = b_bounds(ctx)
    rho, c2, K = second_order_ratio(ctx, state.phi)
    return {
        "t": state.t,
        "newton_iters": int(newton_iters),
        "residual_sup": state.residual_sup,
        "collocation_sup": state.collocation_sup,
        "sup_phi": float(np.max(state.phi)),
        "inf_phi": float(np.min(state.phi)),
        "b": state.b,
        "margin": state.margin,
        "mass": state.mass,
        "mass_rel_error": abs(state.mass - ctx.A) / ctx.A,
        "rho": rho,
        "b_lower": lo,
        "b_upper": hi,
    }


def continuity_march(ctx: OperatorContext, config: SolverConfig, initial: SolutionState | None = None):
    """March ``t`` from 0 to 1; returns ``(state, trace)``.

    ``initial`` optionally replaces the exact ``t = 0`` seed (it is first driven to the
    ``t = 0`` solution by Newton). Raises :class:`MarchFailure` on t-step underflow.
    """
    ctx = ctx.with_data(A=config.A)
    if ctx.B_tilde_max() > 1e-10:
        raise SolverError(f"background not admissible: max eigenvalue of B~ is {ctx.B_tilde_max():.3e}")
    if ctx.tau() <= 0:
        raise SolverError("chi~ is not positive definite")
    trace: list[dict] = []
    c0 = ctx.at(0.0)
    if initial is None:
        state = initial_state(ctx)
    else:
        try:
            state = newton_solve(c0, initial, config)
        except StepFailure as exc:
            raise MarchFailure(f"seed did not converge at t=0: {exc}", trace) from exc
    trace.append(trace_record(c0, state, state.iterations))
    t, dt = 0.0, config.t_step
    while t < 1.0:
        t_new = 1.0 if t + dt >= 1.0 - 1e-12 else t + dt
        ct = ctx.at(t_new)
        try:
            new = newton_solve(ct, replace(state, t=t_new), config)
        except StepFailure as exc:
            dt *= config.shrink
            if dt < config.t_step_min:
                raise MarchFailure(f"t-step underflow at t={t:.6g}: {exc}", trace, state) from exc
            continue
        state = new
        t = t_new
        trace.append(trace_record(ct, state, state.iterations))
        dt = min(dt * config.grow, 1.0)
    return state, trace


# ---------------------------------------------------------------------------
# outputs


def recover_metric(omega_tilde: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """``omega^`` with ``*(omega^^{n-1})/(n-1)! = omega~`` (star of ``alpha``).

    In the ``alpha``-orthonormal eigenframe of ``omega~`` (eigenvalues ``lambda~_i``) the metric
    has eigenvalues ``mu_i = (prod_k lambda~_k)^{1/(n-1)} / lambda~_i``.
    """
    omega_tilde = np.asarray(omega_tilde)
    n = omega_tilde.shape[-1]
    L = np.linalg.cholesky(alpha)
    Li = np.linalg.inv(L)
    LiH = np.conj(np.swapaxes(Li, -1, -2))
    lam, U = np.linalg.eigh(geometry.hermitian_part(Li @ omega_tilde @ LiH))
    if np.min(lam) <= 0:
        raise DomainError("omega~ is not positive definite")
    mu = np.exp(np.sum(np.log(lam), axis=-1, keepdims=True) / (n - 1)) / lam
    inner = (U * mu[..., None, :]) @ np.conj(np.swapaxes(U, -1, -2))
    return geometry.hermitian_part(L @ inner @ np.conj(np.swapaxes(L, -1, -2)))


def uniqueness_probe(ctx: OperatorContext, config: SolverConfig, seeds=(None, 0), amplitude: float = 0.05) -> dict:
    """Solve from two seeds and compare.

    A seed ``None`` means the plain continuity march; an integer seed builds
    :func:`seed_state` and runs Newton directly at ``t = 1``, falling back to a march
    started from that seed.
    """
    ctx = ctx.with_data(A=config.A)
    runs = []
    for seed in seeds:
        rec = {"seed": seed, "ok": False, "method": None, "error": None}
        try:
            if seed is None:
                st, _ = continuity_march(ctx, config)
                rec["method"] = "march"
            else:
                s0 = seed_state(ctx.at(1.0), int(seed), amplitude)
                try:
                    st = newton_solve(ctx.at(1.0), s0, config)
                    rec["method"] = "newton"
                except StepFailure:
                    st, _ = continuity_march(ctx, config, initial=seed_state(ctx.at(0.0), int(seed), amplitude))
                    rec["method"] = "march-from-seed"
            rec.update(ok=True, state=st)
        except (SolverError, DomainError) as exc:
            rec["error"] = str(exc)
        runs.append(rec)
    report = {"runs": [{k: v for k, v in r.items() if k != "state"} for r in runs]}
    if all(r["ok"] for r in runs):
        a, b = runs[0]["state"], runs[1]["state"]
        report.update(phi_diff=float(np.max(np.abs(a.phi - b.phi))), b_diff=abs(a.b - b.b), complete=True)
    else:
        report.update(phi_diff=math.nan, b_diff=math.nan, complete=False)
    report["states"] = [r.get("state") for r in runs]
    return report
