import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critnls.grid import Field, Frame, GridSpec
from critnls.snapshots import atomic_write_text, dump_json, field_csv, load_field, rows_csv, save_field


@settings(max_examples=25, deadline=None)
@given(
    dim=st.sampled_from([1, 2]),
    points=st.sampled_from([8, 16]),
    time=st.floats(0.0, 1.0),
    seed=st.integers(0, 2**31),
)
def test_field_roundtrip_is_bitwise(tmp_path_factory, dim, points, time, seed):
    grid = GridSpec(dim, 3.5, points)
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    field = Field(grid, vals, Frame.U, time)
    stem = tmp_path_factory.mktemp("snap") / "f"
    save_field(field, stem, b=2.5)
    back, b = load_field(stem)
    assert b == 2.5 and back.grid == grid and back.frame is Frame.U and back.time == time
    assert back.values.tobytes() == field.values.tobytes()


def test_binary_layout_and_header(tmp_path):
    grid = GridSpec(1, 1.0, 4)
    field = Field(grid, np.array([1 + 2j, 3 - 4j, 0j, -1j]), Frame.V, 0.125)
    bin_path, json_path = save_field(field, tmp_path / "f.bin")
    raw = np.frombuffer(bin_path.read_bytes(), dtype="<f8")
    assert raw.tolist() == [1, 2, 3, -4, 0, 0, 0, -1]
    assert json.loads(json_path.read_text()) == {"dimension": 1, "M": 4, "L": 1.0, "frame": "v", "time": 0.125, "b": None}


def test_truncated_binary_is_detected(tmp_path):
    grid = GridSpec(1, 1.0, 4)
    bin_path, _ = save_field(Field(grid, np.ones(4, complex), Frame.V, 0.0), tmp_path / "f")
    bin_path.write_bytes(bin_path.read_bytes()[:-8])
    with pytest.raises(ValueError, match="expected 8 floats"):
        load_field(tmp_path / "f")


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = tmp_path / "sub" / "out.txt"
    atomic_write_text(target, "one")
    atomic_write_text(target, "two")
    assert target.read_text() == "two"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]


def test_json_is_deterministic():
    a = dump_json({"b": 0.1, "a": [1, float("nan")]})
    assert a == dump_json({"a": [1, float("nan")], "b": 0.1})
    assert a.index('"a"') < a.index('"b"')


def test_csv_exports():
    grid = GridSpec(1, 1.0, 2)
    text = field_csv(Field(grid, np.array([1j, 2.0]), Frame.V, 0.0))
    assert text.splitlines() == ["x,re,im", "-1.0,0.0,1.0", "0.0,2.0,0.0"]
    with pytest.raises(ValueError):
        field_csv(Field(GridSpec(2, 1.0, 2), np.zeros((2, 2), complex), Frame.V, 0.0))
    assert rows_csv(["a", "b"], [[0.1, "x"]]) == "a,b\n0.1,x\n"
