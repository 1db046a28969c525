"""Frozen background presets.

Each preset is a recipe (generator name, parameters, recorded seed) together with a frozen
snapshot of the background metric shipped in ``formcy/data``.  :func:`regenerate` rebuilds
the snapshot bytes from the recipe, so provenance is checkable at any time.

``perturbed-admissible`` also fixes the manufactured data used by scans: ``h`` is
``F(omega~(phi*))/(n-1)`` with ``phi* = a sum_d cos(x_d)`` over the active real
directions, computed on the working grid so the exact solution is known at every resolution.
"""

from __future__ import annotations

import math
from importlib import resources
from pathlib import Path

import numpy as np

from . import geometry, snapshot
from .geometry import HermitianField
from .grid import TorusGrid

__all__ = [
    "PRESETS",
    "OMEGA0_PRESETS",
    "PresetError",
    "preset_names",
    "preset_path",
    "regenerate",
    "load_background",
    "omega0_field",
    "phi_star_modes",
    "write_all",
]


class PresetError(ValueError):
    pass


PRESETS = {
    "flat": {
        "n": 3,
        "N": 8,
        "active": (0,),
        "generator": "constant_metric",
        "params": {},
        "phi_star_amplitude": 0.1,
    },
    "conformal": {
        "n": 3,
        "N": 8,
        "active": (0,),
        "generator": "conformal_metric",
        "params": {"u_amplitude": 0.3},
        "phi_star_amplitude": 0.1,
    },
    "perturbed-admissible": {
        "n": 3,
        "N": 8,
        "active": (0, 1),
        "generator": "admissible_background",
        "params": {"seed": 7, "amplitude": 0.15, "scale": 1.0, "max_modes": 2, "margin": 0.1},
        "phi_star_amplitude": 1.0,
    },
}

OMEGA0_PRESETS = ("identity", "kahler")


def preset_names() -> tuple[str, ...]:
    return tuple(PRESETS)


def _recipe(name: str) -> dict:
    try:
        return PRESETS[name]
    except KeyError:
        raise PresetError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


def native_grid(name: str) -> TorusGrid:
    r = _recipe(name)
    return TorusGrid.uniform(r["n"], r["N"], active=r["active"])


def build_metric(name: str, grid: TorusGrid | None = None) -> HermitianField:
    """Run the preset's generator on ``grid`` (default: its native grid)."""
    r = _recipe(name)
    grid = grid or native_grid(name)
    p = r["params"]
    if r["generator"] == "constant_metric":
        return geometry.constant_metric(grid)
    if r["generator"] == "conformal_metric":
        return geometry.conformal_metric(grid, p["u_amplitude"] * np.cos(grid.coordinates()[0]))
    if r["generator"] == "admissible_background":
        return geometry.admissible_background(grid, **p)
    raise PresetError(f"unknown generator {r['generator']!r}")


def regenerate(name: str) -> bytes:
    """Snapshot bytes of the preset background rebuilt from its recipe."""
    r = _recipe(name)
    alpha = build_metric(name)
    meta = {"preset": name, "generator": r["generator"], "params": r["params"]}
    return snapshot.dumps(snapshot.Snapshot(alpha.grid, "metric", alpha.values, meta))


def preset_path(name: str) -> Path:
    _recipe(name)
    return Path(str(resources.files("formcy") / "data" / f"{name}.fcyf"))


def write_all(directory=None) -> list[Path]:
    """Write every preset snapshot (default: the package data directory)."""
    out = []
    base = Path(directory) if directory is not None else preset_path("flat").parent
    base.mkdir(parents=True, exist_ok=True)
    for name in PRESETS:
        p = base / f"{name}.fcyf"
        p.write_bytes(regenerate(name))
        out.append(p)
    return out


def _check_compatible(src: TorusGrid, grid: TorusGrid, what: str):
    if (src.n, src.active, src.periods) != (grid.n, grid.active, grid.periods):
        raise PresetError(
            f"{what} lives on n={src.n}, active={src.active}; requested n={grid.n}, active={grid.active}"
        )


def load_background(source: str, grid: TorusGrid | None = None) -> HermitianField:
    """Background metric from a preset name or a snapshot path, resampled onto ``grid``."""
    path = preset_path(source) if source in PRESETS else Path(source)
    if not path.exists():
        raise PresetError(f"background {source!r} is neither a preset nor an existing snapshot")
    snap = snapshot.load(path)
    if snap.kind != "metric":
        raise PresetError(f"snapshot {path} has kind {snap.kind!r}, expected 'metric'")
    if grid is None:
        return HermitianField(snap.grid, snap.data)
    _check_compatible(snap.grid, grid, f"background {source!r}")
    return HermitianField(grid, snapshot.resample(snap.data, snap.grid, grid))


def omega0_field(source: str, grid: TorusGrid) -> HermitianField:
    """``identity``, ``kahler`` (``I + ddbar rho`` for a fixed smooth ``rho``) or a metric snapshot path."""
    if source == "identity":
        return geometry.constant_metric(grid)
    if source == "kahler":
        X = grid.coordinates()
        rho = 0.3 * np.cos(X[0] + X[-1]) + 0.2 * np.sin(X[1]) * np.cos(X[-2])
        return geometry.kahler_metric(grid, rho)
    path = Path(source)
    if not path.exists():
        raise PresetError(f"omega0 {source!r} is neither 'identity', 'kahler' nor an existing snapshot")
    snap = snapshot.load(path)
    _check_compatible(snap.grid, grid, f"omega0 {source!r}")
    return HermitianField(grid, snapshot.resample(snap.data, snap.grid, grid))


def phi_star_modes(grid: TorusGrid, amplitude: float, seed: int | None = None, modes: int = 3) -> np.ndarray:
    """``amplitude * sum_d cos(x_d)``, or with ``seed`` a random combination of low modes.

    The random variant draws ``modes`` wavevectors with entries in ``{-2..2}`` and unit
    Gaussian weights scaled by ``amplitude``.
    """
    X = grid.coordinates()
    if seed is None:
        return amplitude * sum((np.cos(x) for x in X), np.zeros(grid.shape))
    rng = np.random.default_rng(seed)
    out = np.zeros(grid.shape)
    for _ in range(modes):
        kv = rng.integers(-2, 3, size=len(X))
        phase = rng.uniform(0, 2 * math.pi)
        out += amplitude * rng.normal() * np.cos(sum(int(k) * x for k, x in zip(kv, X)) + phase)
    return out
