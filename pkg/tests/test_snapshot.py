import numpy as np
import pytest

from swda.dynamics import State
from swda.grid import Grid
from swda.snapshot import (
    SnapshotError,
    read_metadata,
    read_snapshot,
    read_state_snapshot,
    write_metadata,
    write_snapshot,
    write_state_snapshot,
)


def test_round_trip_bitwise(tmp_path):
    g = Grid(16, 8)
    rng = np.random.default_rng(0)
    fields = {"a": rng.standard_normal(g.shape), "b": rng.standard_normal(g.shape)}
    path = tmp_path / "snap.swda"
    write_snapshot(path, g, fields)
    g2, back = read_snapshot(path)
    assert (g2.nx, g2.ny) == (16, 8)
    assert list(back) == ["a", "b"]
    for name in fields:
        assert np.array_equal(back[name], fields[name])


def test_state_round_trip_preserves_order(tmp_path):
    g = Grid(8, 8)
    rng = np.random.default_rng(1)
    s = State(rng.standard_normal(g.shape), rng.standard_normal(g.shape),
              1.0 + 0.1 * rng.standard_normal(g.shape), g)
    path = tmp_path / "state.swda"
    write_state_snapshot(path, s)
    names = (tmp_path / "state.swda.names").read_text().split()
    assert names == ["u", "v", "eta"]
    s2 = read_state_snapshot(path)
    assert np.array_equal(s2.u, s.u)
    assert np.array_equal(s2.v, s.v)
    assert np.array_equal(s2.eta, s.eta)


def test_corrupted_magic(tmp_path):
    g = Grid(8, 8)
    path = tmp_path / "bad.swda"
    write_snapshot(path, g, {"f": np.zeros(g.shape)})
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(SnapshotError):
        read_snapshot(path)


def test_truncation_detected(tmp_path):
    g = Grid(8, 8)
    path = tmp_path / "trunc.swda"
    write_snapshot(path, g, {"f": np.zeros(g.shape)})
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(SnapshotError):
        read_snapshot(path)


def test_sidecar_count_mismatch(tmp_path):
    g = Grid(8, 8)
    path = tmp_path / "names.swda"
    write_snapshot(path, g, {"f": np.zeros(g.shape)})
    (tmp_path / "names.swda.names").write_text("a\nb\n")
    with pytest.raises(SnapshotError):
        read_snapshot(path)


def test_metadata_round_trip(tmp_path):
    path = tmp_path / "meta.txt"
    write_metadata(path, {"n": 5, "scale": 30.0, "name": "dict"})
    back = read_metadata(path)
    assert back == {"n": "5", "scale": "30.0", "name": "dict"}
