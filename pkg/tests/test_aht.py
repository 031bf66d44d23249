import math

import numpy as np
import pytest

from phipsim import aht, catalog
from phipsim.errors import PrecessionFormError
from phipsim.sequence import SequenceProgram, TimeSpec, wait
from phipsim.spin import hz, to_hz

PI = math.pi


def _astar(name, params, **kw):
    return aht.effective_coupling(aht.trace_for(name, params, **kw), params).Astar_over_A


@pytest.mark.parametrize("name,expected", [
    ("SLIC", 1.0),
    ("SLIC*", 1.0),
    ("PulsePol", math.sin(3.5 * PI / 8) ** 2 / (3.5 * PI / 8)),
    ("PulsePol*", math.sin(3.5 * PI / 8) ** 2 / (3.5 * PI / 8)),
    ("MA-SLIC", math.sqrt(2 / 3)),
])
def test_ideal_rates_match_closed_forms(params, name, expected):
    assert _astar(name, params) == pytest.approx(expected, abs=2e-3)


def test_blew_rate_close_to_square_wave_limit(params):
    assert _astar("BLEWpol", params) == pytest.approx(4 / (3 * PI), rel=0.01)


def test_pulsepol_alpha(params):
    assert aht.alpha(aht.trace_for("PulsePol", params)) == pytest.approx(PI / 2, abs=1e-9)


def test_slic_toggling_vector(params):
    tr = aht.trace_for("SLIC", params)
    assert np.allclose(tr.f[0], [0, 0, 1], atol=1e-12)
    # after the ideal kick f turns in the transverse plane at the lock frequency
    ts = np.linspace(tr.t_core, tr.t_core + tr.period, 9)
    core = tr.f_at(ts)
    phase = params.J * (ts - tr.t_core)
    assert np.allclose(core, np.c_[np.cos(phase), np.sin(phase), 0 * ts], atol=1e-9)
    assert np.allclose(np.linalg.norm(tr.f, axis=1), 1.0, atol=1e-12)


def test_ma_slic_tilted_axis(params):
    tr = aht.trace_for("MA-SLIC", params)
    mean = np.abs(aht.first_order_average(tr, window=tr.period))
    # only the projection onto the tilted field survives the average
    assert np.linalg.norm(mean) == pytest.approx(math.sqrt(1 / 3), abs=1e-3)


@pytest.mark.parametrize("name", ["MA-SLIC", "MA-PulsePol", "M2A-PulsePol", "LG-SLIC",
                                  "BLEWpol", "MREVpol", "MREV-PulsePol"])
def test_dipolar_certificates(params, name):
    assert aht.dipolar_average_tensor(aht.trace_for(name, params, certificate=True)).residual <= 1e-6


@pytest.mark.parametrize("name", ["SLIC", "PulsePol", "PP+XY"])
def test_dipolar_not_suppressed(params, name):
    assert aht.dipolar_average_tensor(aht.trace_for(name, params, certificate=True)).residual >= 0.3


def test_idle_program_gives_pure_z_tensor(params):
    prog = SequenceProgram("idle", core=(wait(TimeSpec("s", 0.01)),), reps=4)
    tr = aht.toggling_trace(prog, params, ideal=True)
    d = aht.dipolar_average_tensor(tr, window=0.01)
    assert np.allclose(d.M, np.diag([0.0, 0.0, 1.0]), atol=1e-12)
    assert d.residual == pytest.approx(math.sqrt(6))


def test_safe_bound_examples(params):
    assert to_hz(aht.safe_bound(hz(0.4))) == pytest.approx(0.4)
    bound = aht.safe_bound(hz(0.33), window=2 * PI / params.J)
    assert bound == pytest.approx(math.sqrt(params.J * hz(0.33) / PI))
    assert to_hz(bound) == pytest.approx(1.11, abs=0.01)


def test_error_budget(params):
    slic = aht.error_budget("SLIC", params)
    assert not slic["dDF"]["suppressed"]
    assert slic["dDF"]["bound_hz"] == pytest.approx(0.4, abs=0.01)
    mrev = aht.error_budget("MREVpol", params)
    assert mrev["dDF"]["suppressed"]
    assert mrev["dDF"]["bound_hz"] > 5 * slic["dDF"]["bound_hz"]
    assert slic["d1"]["certificate"] is None


def test_dual_channel_filter(params):
    pp = aht.trace_for("PP+XY", params)
    assert abs(aht.filter_average(pp)) <= 1e-6
    assert aht.filter_average(aht.trace_for("PulsePol", params)) == 1.0


def test_alpha_undefined_raises():
    tr = aht.TogglingTrace(np.zeros(2), np.zeros((2, 3)), 1.0, None, 0.0, 1.0, True, alpha_offaxis=0.2)
    with pytest.raises(PrecessionFormError):
        aht.alpha(tr)


def test_catalog_meta_alpha_agrees(params):
    for name in ("PulsePol", "DF-PulsePol", "MA-PulsePol"):
        tr = aht.trace_for(name, params)
        meta = catalog.build(name, params).meta["alpha_rad"]
        assert math.cos(aht.alpha(tr) - meta) == pytest.approx(1.0, abs=1e-9)
