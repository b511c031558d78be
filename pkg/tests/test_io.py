import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from inflap import __version__
from inflap.core import Sampler, sample
from inflap.io import OutputError, emit_field, emit_table, emit_trace, read_field, read_table

from conftest import ball_mask


def test_field_round_trip(tmp_path):
    m = ball_mask(0.1, dim=2)
    f = sample(Sampler(lambda x: np.exp(x[:, 0]) * np.sin(3 * x[:, 1]) / 7), m)
    path = emit_field(f, tmp_path / "u.csv", meta={"gamma": 0.5})
    xy, v = read_field(path)
    assert open(path).readline().strip() == "x,y,value"
    assert np.array_equal(v, f.values[np.sort(m.active)])
    assert np.array_equal(xy, m.grid.coords()[np.sort(m.active)])
    side = json.loads((tmp_path / "u.csv.json").read_text())
    assert side["version"] == __version__ and side["gamma"] == 0.5


def test_field_rejects_nan(tmp_path):
    m = ball_mask(0.25)
    vals = np.zeros(m.grid.n_nodes)
    vals[m.interior[0]] = np.nan
    from inflap.core import ScalarField

    with pytest.raises(ValueError):
        emit_field(ScalarField(m, vals), tmp_path / "bad.csv")


def test_trace_layout(tmp_path):
    path = emit_trace([1.0, 0.5, 0.25], tmp_path / "t.csv", extra={"dt": [1, 2, 4]})
    lines = open(path).read().splitlines()
    assert lines[0] == "iter,residual_sup,dt"
    assert lines[1] == "0,1,1"
    assert lines[3] == "2,0.25,4"


def test_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError):
        emit_table(["a"], [[1.0]], blocker / "sub" / "t.csv")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
def test_table_round_trip_is_exact(tmp_path_factory, xs):
    path = tmp_path_factory.mktemp("rt") / "t.csv"
    emit_table(["a", "b"], [[x, -x] for x in xs], path)
    header, data = read_table(path)
    assert header == ["a", "b"]
    assert np.array_equal(data[:, 0], np.array(xs))
