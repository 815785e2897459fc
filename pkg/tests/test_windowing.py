import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from concentra.errors import ContractError, ParameterError
from concentra.store import Repository
from concentra.windowing import MINUTE_MS, WindowBounds, make_window, materialize, slide_windows


def starts(ws):
    return [w.start // MINUTE_MS for w in ws]


def test_half_overlap_grid():
    ws = slide_windows(0, 90 * MINUTE_MS, 30 * MINUTE_MS, 0.5)
    assert starts(ws) == [0, 15, 30, 45, 60]


def test_exact_tiling_and_short_range():
    assert starts(slide_windows(0, 15 * MINUTE_MS, 5 * MINUTE_MS)) == [0, 5, 10]
    assert slide_windows(0, 4 * MINUTE_MS, 5 * MINUTE_MS) == []


def test_bad_parameters():
    with pytest.raises(ParameterError):
        slide_windows(0, 100, 1, 0.9)
    with pytest.raises(ParameterError):
        slide_windows(0, 100, 10, 1.0)
    with pytest.raises(ContractError):
        WindowBounds(5, 5)


def test_coverage():
    b = WindowBounds(0, 5 * MINUTE_MS)
    t = np.arange(15000) * 20
    full = make_window(b, ("p1",), "accel_x", t, np.zeros(15000), 50.0)
    assert full.expected_count == 15000 and full.coverage == 1.0
    half = make_window(b, ("p1",), "accel_x", t[::2], np.zeros(7500), 50.0)
    assert half.coverage == 0.5 and half.passes(0.5)
    empty = make_window(b, ("p1",), "accel_x", t[:0], np.zeros(0), 50.0)
    assert empty.coverage == 0 and empty.count == 0 and not empty.passes(0.5)


def test_materialize_uses_inclusion():
    repo = Repository()
    repo.insert("st1", "co2", [10, 20, 30], [1.0, 2.0, 3.0])
    w = materialize(repo, WindowBounds(10, 30, "(]"), "st1", "co2")
    assert w.values.tolist() == [2.0, 3.0] and w.coverage == 1.0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 500), st.sampled_from([0.0, 0.25, 0.5, 0.75]), st.integers(0, 5000),
       st.lists(st.integers(0, 5000), max_size=50))
def test_window_properties(size, overlap, span, readings):
    step = round(size * (1 - overlap))
    assume(step > 0)
    ws = slide_windows(0, span, size, overlap)
    for a, b in zip(ws, ws[1:]):
        assert b.start - a.start == step
        assert a.end >= b.start  # no gaps
        if overlap == 0.5 and size % 2 == 0:
            assert a.end - b.start == size // 2
    if not ws:
        return
    last_end = ws[-1].end
    assert ws[0].start == 0 and last_end <= span
    r = math.ceil(size / step)
    for t in readings:
        if t >= last_end:
            continue
        hits = sum(bool(w.contains([t])[0]) for w in ws)
        if size <= t < last_end - size:
            assert hits in (r, r - 1)
        else:
            assert 1 <= hits <= r
