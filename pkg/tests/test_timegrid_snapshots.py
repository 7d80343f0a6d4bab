import json

import numpy as np
import pytest

from jetflow.snapshots import HEADER_BYTES, read_snapshot, write_snapshot
from jetflow.timegrid import IntervalSet, fd6, refined_time_grid


def test_fd6_is_sixth_order():
    errs = [abs(fd6(np.sin, 0.3, h) - np.cos(0.3)) for h in (0.1, 0.05)]
    assert np.log2(errs[0] / errs[1]) == pytest.approx(6.0, abs=0.2)


def test_interval_set_algebra():
    E = IntervalSet([(0.1, 0.2), (0.15, 0.3), (0.5, 0.6)])
    assert list(E) == [(0.1, 0.3), (0.5, 0.6)]
    assert E.measure() == pytest.approx(0.3)
    assert E.measure_up_to(0.55) == pytest.approx(0.25)
    C = E.complement(0.0, 1.0)
    assert C.measure() == pytest.approx(0.7)
    assert list(E.contains([0.1, 0.2, 0.4])) == [False, True, False]
    assert list(IntervalSet.from_json(E.to_json())) == list(E)


def test_refined_grid_hits_every_component():
    E = IntervalSet([(0.2, 0.21), (0.7, 0.72)])
    t = refined_time_grid(E, coarse=4, per_component=5, margin=0.01)
    assert np.all(np.diff(t) > 0)
    for a, b in E:
        assert np.sum((t > a) & (t < b)) == 5
    assert t.min() > 0.01 and t.max() < 0.99


def test_snapshot_roundtrip(tmp_path):
    vals = np.random.default_rng(0).standard_normal((3, 16, 16))
    path = write_snapshot(tmp_path / "R.bin", vals, 0.25, name="R", meta={"entries": ["11", "12", "22"]})
    back, head = read_snapshot(path)
    assert np.array_equal(back, vals)
    assert head == {"version": 1, "n": 16, "components": 3, "time": 0.25}
    side = json.loads((tmp_path / "R.bin.json").read_text())
    assert side["header_bytes"] == HEADER_BYTES and side["meta"]["entries"][2] == "22"
    assert path.stat().st_size == HEADER_BYTES + vals.nbytes


def test_snapshot_rejects_corrupt(tmp_path):
    p = tmp_path / "x.bin"
    write_snapshot(p, np.zeros((8, 8)), 0.0)
    raw = p.read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"NOTMAGIC" + raw[8:])
    with pytest.raises(ValueError):
        read_snapshot(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_snapshot(tmp_path / "short.bin")
    with pytest.raises(ValueError):
        write_snapshot(tmp_path / "y.bin", np.zeros((2, 4, 5)), 0.0)
