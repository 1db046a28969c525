"""Binary field snapshots and Fourier resampling.

Layout (all integers little-endian)::

    magic      4 bytes   b"FCYF"
    version    uint16
    n          uint16
    resolution 2n x uint32   (x_1, y_1, ..., x_n, y_n)
    active     n x uint8
    periods    2n x float64
    kind       uint16 length + UTF-8 tag
    metadata   uint32 length + UTF-8 JSON (sorted keys, compact separators)
    tensor     uint16 rank + rank x uint32   (axes after the grid axes)
    payload    uint64 byte count + complex128 values, little-endian (real, imag) pairs
    checksum   uint32 CRC-32 of the payload bytes

The payload is the field array in row-major order: one axis per active real direction in
the order above, followed by the tensor axes.  Metadata carries no timestamps so identical
inputs give identical bytes.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import TorusGrid

__all__ = ["MAGIC", "VERSION", "SnapshotError", "Snapshot", "save", "load", "dumps", "loads", "resample"]

MAGIC = b"FCYF"
VERSION = 1


class SnapshotError(ValueError):
    pass


@dataclass
class Snapshot:
    """A field on a :class:`TorusGrid` with a kind tag (``"phi"``, ``"metric"``, ``"h"``, ...)."""

    grid: TorusGrid
    kind: str
    data: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.shape[: self.grid.ndim] != self.grid.shape:
            raise SnapshotError(f"data shape {self.data.shape} does not start with grid shape {self.grid.shape}")

    @property
    def tensor_shape(self) -> tuple[int, ...]:
        return self.data.shape[self.grid.ndim :]

    def real(self) -> np.ndarray:
        """Data as float64; raises when the imaginary part is not exactly zero."""
        if np.iscomplexobj(self.data) and np.any(self.data.imag != 0):
            raise SnapshotError(f"snapshot of kind {self.kind!r} is not real")
        return np.asarray(self.data.real if np.iscomplexobj(self.data) else self.data, dtype=float)


def _metadata_bytes(meta: dict) -> bytes:
    return json.dumps(meta, sort_keys=True, separators=(",", ":"), allow_nan=True).encode()


def dumps(snap: Snapshot) -> bytes:
    g = snap.grid
    n = g.n
    kind = snap.kind.encode()
    meta = _metadata_bytes(snap.metadata)
    payload = np.ascontiguousarray(snap.data, dtype="<c16").tobytes()
    parts = [
        MAGIC,
        struct.pack("<HH", VERSION, n),
        struct.pack(f"<{2 * n}I", *g.resolution),
        struct.pack(f"<{n}B", *(int(a) for a in g.active)),
        struct.pack(f"<{2 * n}d", *g.periods),
        struct.pack("<H", len(kind)),
        kind,
        struct.pack("<I", len(meta)),
        meta,
        struct.pack("<H", len(snap.tensor_shape)),
        struct.pack(f"<{len(snap.tensor_shape)}I", *snap.tensor_shape),
        struct.pack("<Q", len(payload)),
        payload,
        struct.pack("<I", zlib.crc32(payload)),
    ]
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.buf):
            raise SnapshotError("truncated snapshot")
        out = self.buf[self.pos : self.pos + size]
        self.pos += size
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(buf: bytes) -> Snapshot:
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise SnapshotError("bad magic (not an FCYF snapshot)")
    version, n = r.unpack("<HH")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    res = r.unpack(f"<{2 * n}I")
    active = tuple(bool(a) for a in r.unpack(f"<{n}B"))
    periods = r.unpack(f"<{2 * n}d")
    kind = r.take(r.unpack("<H")[0]).decode()
    meta = json.loads(r.take(r.unpack("<I")[0]).decode())
    rank = r.unpack("<H")[0]
    tshape = r.unpack(f"<{rank}I")
    size = r.unpack("<Q")[0]
    payload = r.take(size)
    (crc,) = r.unpack("<I")
    if r.pos != len(buf):
        raise SnapshotError("trailing bytes after checksum")
    if zlib.crc32(payload) != crc:
        raise SnapshotError("checksum mismatch")
    grid = TorusGrid(n, res, periods, active)
    shape = grid.shape + tuple(tshape)
    if size != 16 * int(np.prod(shape, dtype=np.int64)):
        raise SnapshotError("payload size does not match header")
    data = np.frombuffer(payload, dtype="<c16").reshape(shape).astype(complex)
    return Snapshot(grid, kind, data, meta)


def save(snap: Snapshot, path) -> Path:
    path = Path(path)
    path.write_bytes(dumps(snap))
    return path


def load(path) -> Snapshot:
    return loads(Path(path).read_bytes())


def resample(f: np.ndarray, src: TorusGrid, dst: TorusGrid) -> np.ndarray:
    """Trigonometric interpolation of a field from ``src`` to ``dst`` (same torus, active set).

    Exact for fields whose modes lie strictly below both Nyquist frequencies.  When
    refining, a Nyquist coefficient is split evenly between ``+N/2`` and ``-N/2``; when
    coarsening, the kept band is truncated.
    """
    if (src.n, src.active, src.periods) != (dst.n, dst.active, dst.periods):
        raise SnapshotError("resampling needs the same dimension, active set and periods")
    f = np.asarray(f)
    if src.shape == dst.shape:
        return f.copy()
    F = src.fft(f)
    for ax, (Ns, Nd) in enumerate(zip(src.shape, dst.shape)):
        F = _resize_axis(F, ax, Ns, Nd)
    out = dst.ifft(F) * (dst.npoints / src.npoints)
    return out.real if np.isrealobj(f) else out


def _resize_axis(F: np.ndarray, ax: int, Ns: int, Nd: int) -> np.ndarray:
    if Ns == Nd:
        return F
    F = np.moveaxis(F, ax, 0)
    out = np.zeros((Nd,) + F.shape[1:], dtype=complex)
    m = min(Ns, Nd)
    h = m // 2
    out[:h] = F[:h]
    out[Nd - h + 1 :] = F[Ns - h + 1 :]
    if Nd > Ns:
        out[h] = 0.5 * F[h]
        out[Nd - h] = 0.5 * F[h]
    else:
        out[h] = F[h] + F[Ns - h]
    return np.moveaxis(out, 0, ax)
