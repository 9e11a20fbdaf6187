import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tiltcond.formats import (
    json_dumps,
    paths_header,
    read_paths_tcnd,
    write_csv,
    write_paths_csv,
    write_paths_tcnd,
)


def test_csv_layout(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["x", "y"], [np.array([0.1, 1 / 3]), np.array([1, 2])])
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw.decode().splitlines() == ["x,y", "0.10000000000000001,1", "0.33333333333333331,2"]


def test_paths_csv(tmp_path):
    paths = np.array([[1.5, 2.0], [0.25, -1.0]])
    write_paths_csv(tmp_path / "p.csv", paths, np.array([0.1, 0.2]))
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "y_1,y_2,t_last"
    assert [float(v) for v in lines[2].split(",")] == [0.25, -1.0, 0.2]
    assert paths_header(1) == ["y_1", "t_last"]


def test_tcnd_layout_and_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    paths = rng.normal(size=(7, 3))
    tilt = rng.normal(size=7)
    path = tmp_path / "p.tcnd"
    write_paths_tcnd(path, 50, paths, tilt)
    raw = path.read_bytes()
    assert raw[:4] == b"TCND"
    assert int.from_bytes(raw[4:6], "little") == 1
    assert int.from_bytes(raw[6:14], "little") == 50
    assert int.from_bytes(raw[14:22], "little") == 3
    assert len(raw) == 22 + 8 * 7 * 4
    # columnar: the first column is y_1 for every path
    np.testing.assert_array_equal(np.frombuffer(raw, "<f8", 7, 22), paths[:, 0])
    n, back, t = read_paths_tcnd(path)
    assert n == 50
    np.testing.assert_array_equal(back, paths)
    np.testing.assert_array_equal(t, tilt)


def test_tcnd_rejects_other_files(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"TGRD" + bytes(30))
    with pytest.raises(ValueError):
        read_paths_tcnd(path)


def test_json_nonfinite_and_types():
    s = json_dumps({"a": math.inf, "b": -math.inf, "c": math.nan, "d": None, "e": True,
                    "f": np.int64(3), "g": np.array([0.5, 2.0]), "h": "x"})
    assert json.loads(s) == {"a": "inf", "b": "-inf", "c": "nan", "d": None, "e": True, "f": 3,
                             "g": [0.5, 2.0], "h": "x"}
    with pytest.raises(TypeError):
        json_dumps({"x": object()})


@settings(max_examples=200, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_json_floats_roundtrip_exactly(x):
    assert json.loads(json_dumps([x]))[0] == x
