import io
import logging
import os

import numpy as np
import pytest

from photocov.cost import auxiliary_cost
from photocov.density import phi2
from photocov.experiments import default_region
from photocov.simulator import random_configuration
from photocov.util import THREADS_ENV, dump_json, load_json, parallel_map, worker_count


@pytest.mark.parametrize(
    ["value", "expected"],
    [(None, 1), ("", 1), ("1", 1), ("3", 3), ("0", os.cpu_count() or 1)],
)
def test_worker_count(monkeypatch, value, expected):
    if value is None:
        monkeypatch.delenv(THREADS_ENV, raising=False)
    else:
        monkeypatch.setenv(THREADS_ENV, value)
    assert worker_count() == expected


@pytest.mark.parametrize("value", ["many", "-2"])
def test_worker_count_invalid(monkeypatch, caplog, value):
    monkeypatch.setenv(THREADS_ENV, value)
    with caplog.at_level(logging.WARNING, logger="photocov"):
        assert worker_count() == 1
    assert THREADS_ENV in caplog.text


def test_parallel_map_keeps_order(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "4")
    assert parallel_map(lambda x: x * x, range(50)) == [x * x for x in range(50)]
    assert parallel_map(lambda x: x, []) == []


def test_costs_independent_of_threads(monkeypatch):
    Q = default_region()
    P = random_configuration(7, Q, seed=8)
    density = phi2().with_relative_floor()
    monkeypatch.setenv(THREADS_ENV, "1")
    serial = auxiliary_cost(P, Q, density)
    monkeypatch.setenv(THREADS_ENV, "4")
    assert auxiliary_cost(P, Q, density) == serial


def test_json_files(tmp_path):
    dump_json({"a": [1, 2.5], "b": "µ"}, tmp_path / "data")
    text = (tmp_path / "data.json").read_text()
    assert text.endswith("}\n")
    assert "\\u00b5" in text
    assert load_json(tmp_path / "data") == {"a": [1, 2.5], "b": "µ"}

    s = io.StringIO()
    dump_json(np.arange(3).tolist(), s)
    assert load_json(io.StringIO(s.getvalue())) == [0, 1, 2]


def test_json_files_closed_on_error(tmp_path, monkeypatch):
    import photocov.util as util

    handles = []

    def tracking_open(*args, **kwargs):
        f = open(*args, **kwargs)
        handles.append(f)
        return f

    monkeypatch.setattr(util, "open", tracking_open, raising=False)
    with pytest.raises(TypeError):
        dump_json({"a": object()}, tmp_path / "bad")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ValueError):
        load_json(tmp_path / "broken")
    assert len(handles) == 2
    assert all(f.closed for f in handles)

    s = io.StringIO()
    dump_json([1], s)
    assert not s.closed
