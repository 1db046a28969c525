"""Run configuration: an INI file with sections ``[problem]``, ``[solver]``, ``[scan]``,
``[output]`` and ``[verify]``.

Schema (all keys optional; defaults in parentheses)::

    [problem]
    n = 3                      complex dimension (preset's)
    resolution = 8             one even integer, or 2n comma-separated (preset's)
    active = 0, 1              active complex coordinates, 0-based (preset's)
    background = flat          preset name or metric snapshot path
    omega0 = identity          identity | kahler | metric snapshot path
    h = preset                 preset | zero | manufactured | file | calabi-yau
    h_file =                   snapshot path when h = file
    phi_star = modes           modes | snapshot path (manufactured h and cmd manufacture)
    phi_star_amplitude =       amplitude of the phi* modes (preset's)
    phi_star_seed =            integer: random low modes instead of sum cos(x_d)
    A = 0.01                   normalization mass

    [solver]                   any SolverConfig field except A, e.g. tol = 1e-10

    [scan]
    A_list = 1e-1, 1e-2, 1e-3, 1e-4

    [output]
    directory = formcy-out
    snapshots = true
    report_format = json       json | text

    [verify]
    n_list = 3, 4
    cases = 20
    tolerance = 1e-8
    sign_flip = false          corrupt the star-involution sign (negative control)

Unknown sections or keys are rejected.  ``h = preset`` means ``zero`` for every preset
except ``perturbed-admissible``, where it is the preset's manufactured data.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .solver import SolverConfig

__all__ = ["ConfigError", "ProblemConfig", "ScanConfig", "OutputConfig", "VerifyConfig", "RunConfig", "load", "parse"]

H_SOURCES = ("preset", "zero", "manufactured", "file", "calabi-yau")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemConfig:
    n: int | None = None
    resolution: tuple | None = None
    active: tuple | None = None
    background: str = "flat"
    omega0: str = "identity"
    h: str = "preset"
    h_file: str | None = None
    phi_star: str = "modes"
    phi_star_amplitude: float | None = None
    phi_star_seed: int | None = None
    A: float = 1e-2

    def __post_init__(self):
        if self.n is not None and self.n < 3:
            raise ConfigError("n must be at least 3")
        if self.resolution is not None:
            if any(r < 4 or r % 2 for r in self.resolution):
                raise ConfigError(f"resolutions must be even and >= 4, got {self.resolution}")
            if self.n is not None and len(self.resolution) not in (1, 2 * self.n):
                raise ConfigError("resolution needs one entry or 2n entries")
        if self.active is not None and self.n is not None and any(not 0 <= a < self.n for a in self.active):
            raise ConfigError(f"active coordinates must lie in 0..{self.n - 1}")
        if not self.A > 0:
            raise ConfigError("A must be positive")
        if self.h not in H_SOURCES:
            raise ConfigError(f"h must be one of {', '.join(H_SOURCES)}")
        if self.h == "file" and not self.h_file:
            raise ConfigError("h = file needs h_file")


@dataclass(frozen=True)
class ScanConfig:
    A_list: tuple = (1e-1, 1e-2, 1e-3, 1e-4)

    def __post_init__(self):
        if not self.A_list:
            raise ConfigError("A_list is empty")
        if any(a <= 0 for a in self.A_list):
            raise ConfigError("A_list entries must be positive")
        if any(b >= a for a, b in zip(self.A_list, self.A_list[1:])):
            raise ConfigError("A_list must be strictly decreasing")


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "formcy-out"
    snapshots: bool = True
    report_format: str = "json"

    def __post_init__(self):
        if self.report_format not in ("json", "text"):
            raise ConfigError("report_format must be json or text")


@dataclass(frozen=True)
class VerifyConfig:
    n_list: tuple = (3, 4)
    cases: int = 20
    tolerance: float = 1e-8
    sign_flip: bool = False

    def __post_init__(self):
        if any(n < 3 for n in self.n_list):
            raise ConfigError("verify n_list entries must be at least 3")
        if self.cases < 1 or not self.tolerance > 0:
            raise ConfigError("verify needs cases >= 1 and a positive tolerance")


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(cls, section: dict, name: str):
    """Convert string values to the field types of dataclass ``cls``."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    defaults = cls()
    out = {}
    for key, raw in section.items():
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} in [{name}]")
        if name == "solver" and key == "A":
            raise ConfigError("set the normalization mass A in [problem], not [solver]")
        raw = raw.strip()
        if raw == "":
            continue
        current = getattr(defaults, key)
        try:
            if key in ("resolution", "active", "n_list"):
                value = _ints(raw)
            elif key == "A_list":
                value = _floats(raw)
            elif isinstance(current, bool):
                value = _bool(raw)
            elif key in ("n", "phi_star_seed") or isinstance(current, int):
                value = int(raw)
            elif key in ("A", "phi_star_amplitude") or isinstance(current, float):
                value = float(raw)
            else:
                value = raw
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from None
        out[key] = value
    try:
        return cls(**out)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from None


def parse(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    classes = {"problem": ProblemConfig, "solver": SolverConfig, "scan": ScanConfig, "output": OutputConfig, "verify": VerifyConfig}
    unknown = set(cp.sections()) - set(classes)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    parts = {name: _convert(cls, dict(cp[name]), name) if cp.has_section(name) else cls() for name, cls in classes.items()}
    return RunConfig(**parts)


def load(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse(text)
