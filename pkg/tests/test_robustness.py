import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phipsim import robustness
from phipsim.robustness import SweepResult, SweepSpec, Threshold, TableRow
from phipsim.spin import ErrorParams, hz, to_hz


def _small(**kw):
    kw.setdefault("points_per_decade", 6)
    return SweepSpec("SLIC", "dDF", grid_min=hz(0.05), grid_max=hz(5.0), **kw)


def _result(p, p0=1.0, evaluated=None):
    spec = SweepSpec("SLIC", "dDF")
    grid = spec.grid()[:len(p)]
    ev = np.ones(len(p), bool) if evaluated is None else np.asarray(evaluated)
    return SweepResult(spec, grid, np.asarray(p, float), p0, ev)


def test_default_grid(params):
    g = SweepSpec("PulsePol", "d0").grid()
    assert g[0] == pytest.approx(params.A / 10)
    assert g[-1] <= 2 * params.Omega * (1 + 1e-12)
    assert g[-1] * 10 ** (1 / 24) > 2 * params.Omega
    assert np.allclose(g[1:] / g[:-1], 10 ** (1 / 24))
    assert SweepSpec("PulsePol", "dCS").grid()[-1] <= params.J * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(lo=st.floats(0.01, 10), span=st.floats(1.0, 1e4), ppd=st.integers(1, 48))
def test_grid_properties(lo, span, ppd):
    g = SweepSpec("SLIC", "d0", grid_min=lo, grid_max=lo * span, points_per_decade=ppd).grid()
    assert g[0] == pytest.approx(lo)
    assert np.all(np.diff(g) > 0)
    assert g[-1] <= lo * span * (1 + 1e-9)
    assert len(g) == int(math.floor(math.log10(span) * ppd + 1e-9)) + 1


def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("SLIC", "dXX")
    with pytest.raises(ValueError):
        SweepSpec("SLIC", "d0", points_per_decade=0)
    assert SweepSpec("slic-star", "d0").sequence == "SLIC*"


def test_point_semantics():
    opts, e = SweepSpec("amp swept SLIC", "d0").point(hz(5.0))
    assert e.delta0 == pytest.approx(hz(5.0))
    assert e.deltaDF == pytest.approx(hz(3.0))
    opts, e = SweepSpec("amp swept SLIC", "dDF").point(hz(2.0))
    assert opts["design_dDF_hz"] == pytest.approx(2.0)
    opts, e = SweepSpec("SLIC", "dDF").point(hz(2.0))
    assert opts == {} and e == ErrorParams(deltaDF=hz(2.0))


def test_threshold_is_last_passing_point():
    r = _result([1.0, 0.95, 0.91, 0.85, 0.5])
    t = r.threshold90
    assert t.value == r.errors[2]
    assert t.uncertainty == pytest.approx(r.errors[3] - r.errors[2])
    assert not t.saturated and not t.non_monotone
    assert r.threshold80.value == r.errors[3]


def test_threshold_flags():
    assert _result([1.0, 0.99, 0.98]).threshold90.saturated
    assert _result([1.0, 0.5, 0.95, 0.2]).threshold90.non_monotone
    none = _result([0.1, 0.1]).threshold90
    assert none.value is None and none.hz is None


def test_nan_points_fail():
    assert _result([1.0, np.nan, 0.2]).threshold90.value == _result([1.0]).errors[0]


def test_sign_aware_ratio():
    r = _result([-0.99, -0.95, -0.5], p0=-1.0)
    assert r.threshold90.value == r.errors[1]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=20), st.floats(0.8, 0.95))
def test_threshold_passes_and_next_fails(p, level):
    r = _result(p)
    t = r.threshold(level)
    ok = np.asarray(p) >= level
    if t.value is None:
        assert not ok.any()
        return
    k = int(np.flatnonzero(r.errors == t.value)[0])
    assert ok[k] and not ok[k + 1:].any()


def test_unevaluated_points_do_not_count():
    r = _result([1.0, 0.95, 0.99], evaluated=[True, True, False])
    assert r.threshold90.value == r.errors[1]


def test_real_sweep_deterministic_and_refine_exact():
    full = robustness.sweep(_small())
    again = robustness.sweep(_small())
    assert np.array_equal(full.p, again.p)
    t = full.threshold90
    assert 0.1 <= t.hz <= 0.6
    coarse = robustness.sweep(_small(refine=3, stop_after=2))
    assert coarse.threshold90 == t
    assert coarse.evaluated.sum() < full.evaluated.sum()


def test_error_zero_matches_reference():
    spec = _small()
    p0 = robustness.reference_transfer(spec)
    opts, errs = spec.point(0.0)
    assert robustness.run_point("SLIC", spec.params, opts, errs, spec.evolve_options) == p0
    assert p0 > 0.98


def test_sweep_csv(tmp_path):
    r = _result([1.0, 0.95, 0.5], evaluated=[True, True, False])
    text = r.to_csv(tmp_path / "s.csv")
    lines = text.split("\r\n")
    assert lines[0] == "error_Hz,p_final"
    assert len([x for x in lines if x]) == 3
    assert float(lines[1].split(",")[0]) == pytest.approx(to_hz(r.errors[0]))
    assert (tmp_path / "s.csv").read_bytes().count(b"\r\n") == 3
    s = r.summary()
    assert s["threshold90"]["value_Hz"] == pytest.approx(to_hz(r.errors[1]))


def test_table_exports():
    row = TableRow("SLIC", "single channel", 1.0002,
                   {"dDF": Threshold(hz(0.2481), hz(0.03)), "d0": None}, 10 ** (1 / 24) - 1)
    rec = row.as_record()
    assert list(rec)[:4] == ["name", "category", "Astar_over_A", "grid_spacing"]
    assert rec["dDF_Hz"] == 0.2 and rec["d0_Hz"] is None and rec["Astar_over_A"] == 1.0
    text = robustness.table_csv([row])
    assert text.splitlines()[0].split(",") == list(robustness.TABLE_COLUMNS)
    data = json.loads(robustness.table_json([row]))
    assert data[0]["grid_spacing"] == pytest.approx(0.1007, abs=1e-4)
    assert robustness.table_manifest([row])["SLIC"]["thresholds_Hz"]["dDF"] == pytest.approx(0.2481)


def test_dumps_is_stable():
    a = robustness.dumps({"b": np.float64(1.5), "a": [np.int64(2)]})
    assert a == robustness.dumps({"a": [2], "b": 1.5})
    assert a.index('"a"') < a.index('"b"')
