"""Discretized complex tori and Fourier spectral calculus on them.

A :class:`TorusGrid` describes ``C^n / Lambda`` with a rectangular period lattice.
Fields only vary in the *active* complex coordinates; a field array has one axis
per active real direction (``x_k``, ``y_k`` for each active ``z_k = x_k + i y_k``)
followed by any tensor axes.  Derivatives along inactive coordinates vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft

__all__ = ["GridError", "TorusGrid"]


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on a complex torus.

    Parameters
    ----------
    n : int
        Complex dimension (``n >= 3``).
    resolution : tuple of int
        Points per real direction, ordered ``(x_1, y_1, ..., x_n, y_n)``.
        Entries for inactive coordinates are carried but unused.
    periods : tuple of float
        Period length per real direction, same ordering.
    active : tuple of bool
        Which complex coordinates fields may depend on.
    """

    n: int
    resolution: tuple
    periods: tuple
    active: tuple
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        n = self.n
        if n < 3:
            raise GridError("complex dimension must be at least 3")
        res = tuple(int(r) for r in self.resolution)
        per = tuple(float(p) for p in self.periods)
        act = tuple(bool(a) for a in self.active)
        if len(res) != 2 * n or len(per) != 2 * n or len(act) != n:
            raise GridError("resolution/periods need 2n entries and active needs n entries")
        for k in range(n):
            if act[k]:
                for r in res[2 * k : 2 * k + 2]:
                    if r < 4 or r % 2:
                        raise GridError(f"resolution {r} must be even and >= 4")
        if any(p <= 0 for p in per):
            raise GridError("periods must be positive")
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "periods", per)
        object.__setattr__(self, "active", act)

    @classmethod
    def uniform(cls, n: int, N: int, active=(0,), period: float = 2 * math.pi) -> "TorusGrid":
        """Square torus with ``N`` points per real direction; ``active`` lists coordinate indices."""
        mask = tuple(k in set(active) for k in range(n))
        return cls(n, (N,) * (2 * n), (period,) * (2 * n), mask)

    # -- geometry of the grid -------------------------------------------------

    @property
    def active_coords(self) -> tuple[int, ...]:
        return tuple(k for k in range(self.n) if self.active[k])

    @property
    def real_dirs(self) -> tuple[int, ...]:
        """Indices (into ``resolution``) of the real directions carried by field arrays."""
        return tuple(d for k in self.active_coords for d in (2 * k, 2 * k + 1))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.resolution[d] for d in self.real_dirs)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def npoints(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(self.ndim))

    def coordinates(self) -> list[np.ndarray]:
        """Meshgrid arrays for each active real direction (x_k, y_k, ...)."""
        axes = [np.arange(self.resolution[d]) * self.periods[d] / self.resolution[d] for d in self.real_dirs]
        return list(np.meshgrid(*axes, indexing="ij")) if axes else []

    def z(self, k: int) -> np.ndarray:
        """Complex coordinate ``z_k`` on the grid (zeros if inactive)."""
        if not self.active[k]:
            return np.zeros(self.shape, dtype=complex)
        pos = self.active_coords.index(k)
        X = self.coordinates()
        return X[2 * pos] + 1j * X[2 * pos + 1]

    def wavenumbers(self) -> list[np.ndarray]:
        """Angular wavenumbers per active real direction, broadcast to the grid shape."""
        out = []
        for ax, d in enumerate(self.real_dirs):
            N, L = self.resolution[d], self.periods[d]
            k = np.fft.fftfreq(N, d=L / N) * 2 * np.pi
            shp = [1] * self.ndim
            shp[ax] = N
            out.append(k.reshape(shp))
        return out

    def _first_derivative_symbols(self):
        key = "sym1"
        if key not in self._cache:
            syms = []
            for ax, (d, kk) in enumerate(zip(self.real_dirs, self.wavenumbers())):
                N = self.resolution[d]
                s = 1j * kk.copy()
                # odd derivatives of the Nyquist mode are undefined for real data
                idx = [slice(None)] * self.ndim
                idx[ax] = N // 2
                s = np.broadcast_to(s, s.shape).copy()
                s[tuple(idx)] = 0.0
                syms.append(s)
            self._cache[key] = syms
        return self._cache[key]

    def symbols(self):
        """Fourier symbols ``(dz[k], dzbar[k])`` for k in range(n), broadcast to the grid.

        ``d/dz = (d/dx - i d/dy)/2`` and ``d/dzbar = (d/dx + i d/dy)/2``.
        Inactive coordinates get ``None``.
        """
        key = "symz"
        if key not in self._cache:
            s1 = self._first_derivative_symbols()
            dz, dzb = [None] * self.n, [None] * self.n
            for pos, k in enumerate(self.active_coords):
                sx, sy = s1[2 * pos], s1[2 * pos + 1]
                dz[k] = np.broadcast_to(0.5 * (sx - 1j * sy), self.shape)
                dzb[k] = np.broadcast_to(0.5 * (sx + 1j * sy), self.shape)
            self._cache[key] = (dz, dzb)
        return self._cache[key]

    def second_symbol(self, k: int, l: int) -> np.ndarray | None:
        """Fourier symbol of ``d_k dbar_l``.

        Built as a product of the Nyquist-zeroed first-derivative symbols, so second
        derivatives compose exactly with :meth:`d` (``d ddbar = 0`` on the grid).  The modes
        annihilated by every derivative are removed by :meth:`resolve`.
        """
        if not (self.active[k] and self.active[l]):
            return None
        key = ("sym2", k, l)
        if key not in self._cache:
            dz, dzb = self.symbols()
            self._cache[key] = np.broadcast_to(dz[k] * dzb[l], self.shape)
        return self._cache[key]

    def resolved_mask(self) -> np.ndarray:
        """Spectral mask excluding the non-constant common kernel of all derivatives.

        A mode is dropped when its index along every active real direction is ``0`` or
        Nyquist, and at least one is Nyquist (the grid checkerboards).
        """
        key = "resolved"
        if key not in self._cache:
            flat = np.ones(self.shape, dtype=bool)
            zero = np.ones(self.shape, dtype=bool)
            for ax, d in enumerate(self.real_dirs):
                N = self.resolution[d]
                idx = np.arange(N)
                shp = [1] * self.ndim
                shp[ax] = N
                flat = flat & ((idx == 0) | (idx == N // 2)).reshape(shp)
                zero = zero & (idx == 0).reshape(shp)
            self._cache[key] = ~flat | zero
        return self._cache[key]

    def resolve(self, f: np.ndarray) -> np.ndarray:
        """Remove the checkerboard modes (see :meth:`resolved_mask`); real input stays real."""
        f = np.asarray(f)
        if not self.ndim:
            return f
        F = self.fft(f)
        out = self.ifft(self._expand(self.resolved_mask(), F) * F)
        return out.real if np.isrealobj(f) else out

    # -- transforms ----------------------------------------------------------

    def fft(self, f: np.ndarray) -> np.ndarray:
        return scipy.fft.fftn(f, axes=self.axes) if self.ndim else np.asarray(f, dtype=complex)

    def ifft(self, F: np.ndarray) -> np.ndarray:
        return scipy.fft.ifftn(F, axes=self.axes) if self.ndim else F

    def _expand(self, sym: np.ndarray, f: np.ndarray) -> np.ndarray:
        return sym.reshape(sym.shape + (1,) * (f.ndim - self.ndim))

    def d(self, f: np.ndarray, k: int, bar: bool = False) -> np.ndarray:
        """``d f / dz_k`` (or ``d/dzbar_k``); zero along inactive coordinates."""
        f = np.asarray(f)
        dz, dzb = self.symbols()
        sym = (dzb if bar else dz)[k]
        if sym is None:
            return np.zeros(f.shape, dtype=complex)
        return self.ifft(self._expand(sym, f) * self.fft(f))

    def grad(self, f: np.ndarray, bar: bool = False) -> np.ndarray:
        """All first derivatives, derivative index inserted after the grid axes."""
        f = np.asarray(f)
        F = self.fft(f) if self.active_coords else None
        dz, dzb = self.symbols()
        syms = dzb if bar else dz
        out = np.zeros(self.shape + (self.n,) + f.shape[self.ndim :], dtype=complex)
        for k in self.active_coords:
            out[(slice(None),) * self.ndim + (k,)] = self.ifft(self._expand(syms[k], f) * F)
        return out

    def ddbar(self, f: np.ndarray) -> np.ndarray:
        """Mixed Hessian ``H[..., k, l, rest] = d_k dbar_l f`` (see :meth:`second_symbol`)."""
        f = np.asarray(f)
        out = np.zeros(self.shape + (self.n, self.n) + f.shape[self.ndim :], dtype=complex)
        if not self.active_coords:
            return out
        F = self.fft(f)
        for k in self.active_coords:
            for l in self.active_coords:
                out[(slice(None),) * self.ndim + (k, l)] = self.ifft(self._expand(self.second_symbol(k, l), f) * F)
        return out

    # -- quadrature and spectral diagnostics ---------------------------------

    def mean(self, f: np.ndarray) -> np.ndarray:
        return np.mean(f, axis=self.axes) if self.ndim else np.asarray(f)

    def volume(self) -> float:
        return float(np.prod([self.periods[d] for d in self.real_dirs])) if self.ndim else 1.0

    def dealias(self, f: np.ndarray) -> np.ndarray:
        """Two-thirds rule: drop modes above 2/3 of the Nyquist wavenumber."""
        F = self.fft(f)
        mask = self._keep_mask()
        out = self.ifft(self._expand(mask, F) * F)
        return out.real if np.isrealobj(f) else out

    def _keep_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        for ax, d in enumerate(self.real_dirs):
            N = self.resolution[d]
            m = np.abs(np.fft.fftfreq(N) * N) <= N // 3
            shp = [1] * self.ndim
            shp[ax] = N
            mask = mask & m.reshape(shp)
        return mask

    def tail_fraction(self, f: np.ndarray) -> float:
        """Spectral energy fraction outside the two-thirds band (smoothness proxy)."""
        if not self.ndim:
            return 0.0
        F = np.abs(self.fft(f)) ** 2
        total = float(np.sum(F))
        if total == 0.0:
            return 0.0
        keep = self._expand(self._keep_mask(), F)
        return float(np.sum(np.where(keep, 0.0, F))) / total
