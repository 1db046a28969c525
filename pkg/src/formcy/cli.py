"""Command-line front end.

``formcy verify-star|solve|scan|manufacture [--config PATH] [--out DIR] [--seed INT]``

Exit codes: 0 success, 1 verification failure, 2 invalid or inadmissible input,
3 solver failure.  ``FORMCY_THREADS`` caps the scan worker pool.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import diagnostics, geometry, operator, presets, snapshot, solver, verify
from .geometry import HermitianField
from .grid import TorusGrid

__all__ = ["main", "Problem", "build_problem", "EXIT_OK", "EXIT_VERIFY", "EXIT_INPUT", "EXIT_SOLVER"]

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3


class InputError(Exception):
    """Invalid or inadmissible input (exit code 2)."""


@dataclass
class Problem:
    grid: TorusGrid
    alpha: HermitianField
    omega0: HermitianField
    h: np.ndarray
    A: float
    phi_exact: np.ndarray | None
    meta: dict


# ---------------------------------------------------------------------------
# problem construction


def _grid_for(cfg: cfgmod.ProblemConfig) -> TorusGrid | None:
    """Requested grid, or ``None`` to use the background's own grid."""
    if cfg.n is None and cfg.resolution is None and cfg.active is None:
        return None
    base = presets.native_grid(cfg.background) if cfg.background in presets.PRESETS else snapshot.load(cfg.background).grid
    n = cfg.n if cfg.n is not None else base.n
    active = cfg.active if cfg.active is not None else base.active_coords
    if cfg.resolution is None:
        res = base.resolution if n == base.n else (base.resolution[0],) * (2 * n)
    elif len(cfg.resolution) == 1:
        res = cfg.resolution * (2 * n)
    else:
        res = cfg.resolution
    periods = base.periods if n == base.n else (2 * math.pi,) * (2 * n)
    return TorusGrid(n, res, periods, tuple(k in set(active) for k in range(n)))


def _phi_star(cfg: cfgmod.ProblemConfig, grid: TorusGrid) -> np.ndarray:
    if cfg.phi_star == "modes":
        amp = cfg.phi_star_amplitude
        if amp is None:
            amp = presets.PRESETS[cfg.background]["phi_star_amplitude"] if cfg.background in presets.PRESETS else 0.1
        return presets.phi_star_modes(grid, amp, cfg.phi_star_seed)
    snap = snapshot.load(cfg.phi_star)
    if (snap.grid.n, snap.grid.active) != (grid.n, grid.active):
        raise InputError(f"phi* snapshot {cfg.phi_star} does not match the problem grid")
    return snapshot.resample(snap.real(), snap.grid, grid)


def build_problem(cfg: cfgmod.ProblemConfig) -> Problem:
    """Background, omega0, h and A for a configuration; raises :class:`InputError`."""
    try:
        grid = _grid_for(cfg)
        alpha = presets.load_background(cfg.background, grid)
        grid = alpha.grid
        omega0 = presets.omega0_field(cfg.omega0, grid)
    except (presets.PresetError, snapshot.SnapshotError, OSError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    A = cfg.A
    phi_exact = None
    meta = {"background": cfg.background, "omega0": cfg.omega0, "h": cfg.h}
    source = cfg.h
    if source == "preset":
        source = "manufactured" if cfg.background == "perturbed-admissible" else "zero"
    if source == "zero":
        h = np.zeros(grid.shape)
    elif source == "calabi-yau":
        h = -np.linalg.slogdet(alpha.values)[1]
    elif source == "file":
        try:
            snap = snapshot.load(cfg.h_file)
            h = snapshot.resample(snap.real(), snap.grid, grid)
        except (snapshot.SnapshotError, OSError, ValueError) as exc:
            raise InputError(f"h file: {exc}") from exc
    else:
        phi_star = _phi_star(cfg, grid)
        ctx = operator.build_context(alpha, omega0)
        try:
            m = diagnostics.manufacture(ctx, phi_star)
        except diagnostics.Inadmissible as exc:
            raise InputError(str(exc)) from exc
        h = m.h
        # the exact solution at mass A differs from phi* by a constant when B~ = 0
        if ctx.B_tilde_norm() <= 1e-12:
            phi_exact = grid.resolve(phi_star) + math.log(A / m.A)
        else:
            A = m.A
            phi_exact = grid.resolve(phi_star)
        meta.update(A_star=m.A, manufactured_residual=m.residual_sup)
    return Problem(grid, alpha, omega0, np.asarray(h, dtype=float), float(A), phi_exact, meta)


def _screen(problem: Problem):
    rep = geometry.astheno_screen(problem.alpha)
    if not rep.admissible:
        raise InputError(
            "background rejected: requires *i ddbar(alpha^{n-2}) <= 0, but its largest eigenvalue "
            f"relative to alpha is {rep.max_eigenvalue:.6e} at grid index {rep.location}"
        )
    return rep


# ---------------------------------------------------------------------------
# output helpers


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o)}")


def _write_jsonl(path: Path, records) -> None:
    path.write_text("".join(_json_line(r) + "\n" for r in records))


def _emit(report: dict, fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "json":
        out.write(json.dumps(report, sort_keys=True, indent=2, default=_json_default) + "\n")
    else:
        for k in sorted(report):
            out.write(f"{k}: {report[k]}\n")


def _snap(grid, kind, data, meta, path: Path):
    snapshot.save(snapshot.Snapshot(grid, kind, data, meta), path)


# ---------------------------------------------------------------------------
# commands


def cmd_verify_star(cfg: cfgmod.RunConfig, out: Path, seed: int) -> int:
    v = cfg.verify
    cases = verify.star_suite(v.n_list, v.cases, v.tolerance, seed, v.sign_flip)
    cases += verify.astheno_suite(v.n_list, v.cases, v.tolerance, seed)
    try:
        alpha = presets.load_background(cfg.problem.background, _grid_for(cfg.problem))
    except (presets.PresetError, snapshot.SnapshotError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    cases.append(verify.background_case(alpha, v.tolerance, cfg.problem.background))
    report = verify.VerifyReport(cases)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out / "verify.jsonl", [c.as_dict() for c in cases])
    for c in cases:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} error={c.error:.3e} tol={c.tolerance:.1e}")
    if report.passed:
        return EXIT_OK
    worst = max(report.failures(), key=lambda c: c.error / c.tolerance)
    print(f"verification failed: {len(report.failures())} case(s); worst {worst.name} error={worst.error:.3e}")
    return EXIT_VERIFY


def cmd_solve(cfg: cfgmod.RunConfig, out: Path, seed: int) -> int:
    try:
        problem = build_problem(cfg.problem)
        _screen(problem)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    ctx = operator.build_context(problem.alpha, problem.omega0, problem.h, problem.A)
    scfg = replace(cfg.solver, A=problem.A)
    out.mkdir(parents=True, exist_ok=True)
    meta = {**problem.meta, "seed": seed, "A": problem.A}
    try:
        state, trace = solver.continuity_march(ctx, scfg)
    except solver.MarchFailure as exc:
        _write_jsonl(out / "trace.jsonl", exc.trace)
        print(f"error: march failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except solver.SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _write_jsonl(out / "trace.jsonl", trace)
    rep = diagnostics.geometry_certificates(ctx, state).as_dict()
    if problem.phi_exact is not None:
        rep["recovery_error_phi"] = float(np.max(np.abs(state.phi - problem.phi_exact)))
        rep["recovery_error_b"] = abs(state.b)
    rep.update(t_steps=len(trace) - 1, A=problem.A, mass=state.mass)
    if cfg.output.snapshots:
        _snap(problem.grid, "phi", state.phi, meta, out / "phi.fcyf")
        wt = operator.assemble_omega_tilde(ctx.at(1.0), state.phi)
        _snap(problem.grid, "metric", solver.recover_metric(wt, problem.alpha.values), meta, out / "omega_hat.fcyf")
    (out / "report.json").write_text(json.dumps(rep, sort_keys=True, indent=2, default=_json_default) + "\n")
    _emit(rep, cfg.output.report_format)
    return EXIT_OK


SCAN_COLUMNS = ("A", "sup_phi_plus", "bound", "M_hat", "sup_phi", "max_sup_along_march", "b", "rho", "inf_phi", "l1_phi")


def cmd_scan(cfg: cfgmod.RunConfig, out: Path, seed: int) -> int:
    try:
        problem = build_problem(cfg.problem)
        _screen(problem)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    ctx = operator.build_context(problem.alpha, problem.omega0, problem.h, problem.A)
    kappa = operator.kappa_estimate(ctx.tau(), float(np.max(np.abs((ctx.n - 1) * ctx.h))), ctx.n)
    A0 = solver.a0_rule(ctx, cfg.solver.m_hat, kappa)
    if any(a > A0 for a in cfg.scan.A_list):
        print(f"error: A-list exceeds A0 = {A0:.6e}", file=sys.stderr)
        return EXIT_INPUT
    res = diagnostics.moser_scan(ctx, cfg.scan.A_list, cfg.solver)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "scan.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCAN_COLUMNS)
        for r in res.rows:
            d = {**asdict(r), "M_hat": res.M_hat}
            w.writerow([repr(float(d[c])) for c in SCAN_COLUMNS])
    _write_jsonl(out / "scan_traces.jsonl", [{"A": a, **rec} for a, tr in zip(cfg.scan.A_list, res.traces) for rec in tr])
    summary = {
        "n": res.n, "M_hat": res.M_hat, "exponent": res.exponent, "fit_residual": res.fit_residual,
        "C_linear": res.C_linear, "degenerate": res.degenerate, "sup_le_one": res.sup_le_one,
        "max_rho": res.max_rho, "bound_holds": res.bound_holds(), "A0": A0, "failure": res.failure, "seed": seed,
    }
    (out / "scan_summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2, default=_json_default) + "\n")
    if res.degenerate:
        print(_json_line({"warning": "degenerate fit: fewer than two rows with sup(phi)_+ > 0; exponent not fitted"}))
    _emit(summary, cfg.output.report_format)
    return EXIT_SOLVER if res.failure else EXIT_OK


def cmd_manufacture(cfg: cfgmod.RunConfig, out: Path, seed: int, certify: float = 1e-12) -> int:
    p = cfg.problem
    try:
        grid = _grid_for(p)
        alpha = presets.load_background(p.background, grid)
        omega0 = presets.omega0_field(p.omega0, alpha.grid)
        phi_star = _phi_star(p, alpha.grid)
    except (InputError, presets.PresetError, snapshot.SnapshotError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    ctx = operator.build_context(alpha, omega0)
    try:
        m = diagnostics.manufacture(ctx, phi_star)
    except diagnostics.Inadmissible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    rep = {"A_star": m.A, "residual_sup": m.residual_sup, "certified": m.residual_sup <= certify, "seed": seed}
    if not rep["certified"]:
        print(f"certificate failed: residual {m.residual_sup:.3e} > {certify:.1e}", file=sys.stderr)
        _emit(rep, cfg.output.report_format)
        return EXIT_VERIFY
    out.mkdir(parents=True, exist_ok=True)
    meta = {"background": p.background, "omega0": p.omega0, "A_star": m.A, "seed": seed}
    _snap(alpha.grid, "h", m.h, meta, out / "h.fcyf")
    _snap(alpha.grid, "phi", alpha.grid.resolve(phi_star), meta, out / "phi_star.fcyf")
    _emit(rep, cfg.output.report_format)
    return EXIT_OK


COMMANDS = {"verify-star": cmd_verify_star, "solve": cmd_solve, "scan": cmd_scan, "manufacture": cmd_manufacture}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="formcy", description="Form-type Calabi-Yau solver on complex tori.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="INI configuration file (defaults when omitted)")
    ap.add_argument("--out", help="output directory (overrides [output] directory)")
    ap.add_argument("--seed", type=int, default=0, help="run seed (verification suites, recorded in metadata)")
    args = ap.parse_args(argv)
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INPUT
    try:
        cfg = cfgmod.load(args.config) if args.config else cfgmod.RunConfig()
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out or cfg.output.directory)
    return COMMANDS[args.command](cfg, out, args.seed)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
