import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formcy import snapshot
from formcy.grid import TorusGrid
from formcy.snapshot import Snapshot, SnapshotError


def make(kind="phi", tensor=(), seed=0):
    g = TorusGrid.uniform(3, 8, active=(0, 2))
    rng = np.random.default_rng(seed)
    data = rng.normal(size=g.shape + tensor) + 1j * rng.normal(size=g.shape + tensor)
    return Snapshot(g, kind, data, {"seed": seed, "note": "x"})


def test_round_trip_byte_identical(tmp_path):
    s = make("metric", (3, 3))
    p = snapshot.save(s, tmp_path / "a.fcyf")
    back = snapshot.load(p)
    np.testing.assert_array_equal(back.data, s.data)
    assert back.kind == "metric" and back.metadata == s.metadata and back.grid == s.grid
    assert back.tensor_shape == (3, 3)
    assert snapshot.dumps(back) == p.read_bytes()


def test_header_layout():
    buf = snapshot.dumps(make())
    assert buf[:4] == b"FCYF"
    assert int.from_bytes(buf[4:6], "little") == snapshot.VERSION
    assert int.from_bytes(buf[6:8], "little") == 3


@pytest.mark.parametrize("where", [-1, -10, 200])
def test_corruption_detected(where):
    buf = bytearray(snapshot.dumps(make()))
    buf[where] ^= 0xFF
    with pytest.raises(SnapshotError):
        snapshot.loads(bytes(buf))


def test_payload_corruption_names_checksum():
    buf = bytearray(snapshot.dumps(make()))
    buf[-100] ^= 0x01
    with pytest.raises(SnapshotError, match="checksum"):
        snapshot.loads(bytes(buf))


def test_truncation_and_magic():
    buf = snapshot.dumps(make())
    with pytest.raises(SnapshotError, match="truncated"):
        snapshot.loads(buf[:-7])
    with pytest.raises(SnapshotError, match="magic"):
        snapshot.loads(b"XXXX" + buf[4:])
    with pytest.raises(SnapshotError, match="trailing"):
        snapshot.loads(buf + b"\0")


def test_shape_mismatch_rejected():
    g = TorusGrid.uniform(3, 8, active=(0,))
    with pytest.raises(SnapshotError):
        Snapshot(g, "phi", np.zeros((4, 8)))


def test_real_accessor():
    s = make()
    with pytest.raises(SnapshotError):
        s.real()
    r = Snapshot(s.grid, "phi", s.data.real)
    np.testing.assert_array_equal(r.real(), s.data.real)


@settings(max_examples=10, deadline=None)
@given(kx=st.integers(-3, 3), ky=st.integers(-3, 3), amp=st.floats(-2, 2))
def test_resample_exact_for_band_limited(kx, ky, amp):
    src = TorusGrid.uniform(3, 8, active=(1,))
    dst = TorusGrid.uniform(3, 16, active=(1,))
    f = lambda g: amp * np.cos(kx * g.coordinates()[0] + ky * g.coordinates()[1] + 0.3)
    up = snapshot.resample(f(src), src, dst)
    assert np.max(np.abs(up - f(dst))) <= 1e-13
    down = snapshot.resample(f(dst), dst, src)
    assert np.max(np.abs(down - f(src))) <= 1e-13


def test_resample_nyquist_split_and_guard():
    src = TorusGrid.uniform(3, 8, active=(0,))
    dst = TorusGrid.uniform(3, 16, active=(0,))
    x = src.coordinates()[0]
    f = np.cos(4 * x)
    up = snapshot.resample(f, src, dst)
    # the Nyquist cosine maps to the band-limited interpolant, which agrees on the coarse points
    np.testing.assert_allclose(up[::2, ::2], f, atol=1e-13)
    other = TorusGrid.uniform(3, 8, active=(1,))
    with pytest.raises(SnapshotError):
        snapshot.resample(f, src, other)
