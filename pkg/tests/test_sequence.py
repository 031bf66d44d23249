import json
import math

import numpy as np
import pytest

from phipsim import catalog
from phipsim.errors import ConfigError, InfeasibleSchedule, OutOfRange
from phipsim.sequence import (SequenceProgram, TimeSpec, WaveSpec, cw, filling_factor, pulse,
                              rotation_angle, schedule, wait, waveform)
from phipsim.spin import hz


def test_pulsepol_wait_accounting(params):
    s = schedule(catalog.build("PulsePol", params), params)
    core = s.pieces["core"]["S"]
    pulses = [p for p in core if p.kind == "pulse"]
    waits = [p for p in core if p.kind == "wait"]
    assert sum(p.duration for p in pulses) == pytest.approx(0.004, rel=1e-12)
    tau = 3.5 * math.pi / params.J
    assert tau == pytest.approx(0.14957, abs=1e-5)
    for w in waits:
        assert w.duration == pytest.approx((tau - 0.004) / 4, rel=1e-12)
    assert waits[0].duration == pytest.approx(0.036393, abs=1e-6)
    assert s.period == pytest.approx(tau, rel=1e-12)


def test_ideal_pulse_limit(params):
    fast = params.scaled_controls(1e9)
    s = schedule(catalog.build("PulsePol", fast), fast)
    tau = 3.5 * math.pi / params.J
    for w in (p for p in s.pieces["core"]["S"] if p.kind == "wait"):
        assert w.duration == pytest.approx(tau / 4, rel=1e-7)
    assert filling_factor(catalog.build("PulsePol", fast), fast) < 1e-7


def test_windowless_blew(params):
    prog = catalog.build("BLEWpol", params)
    s = schedule(prog, params)
    assert all(p.duration == pytest.approx(0.0, abs=1e-15) for p in s.pieces["core"]["S"] if p.kind == "wait")
    assert filling_factor(prog, params) == pytest.approx(1.0)


def test_mrev_filling_factor(params):
    assert filling_factor(catalog.build("MREVpol", params), params) == pytest.approx(0.5)


def test_slic_waveform(params):
    s = schedule(catalog.build("SLIC", params), params)
    for t in np.linspace(s.t_pre + 1e-6, s.t_pre + 3 * s.period, 7):
        om_s, om_i = waveform(s, t)
        assert om_s == pytest.approx([params.J, 0, 0], abs=1e-9)
        assert om_i == pytest.approx([0, 0, 0])


def test_ma_slic_waveform(params):
    s = schedule(catalog.build("MA-SLIC", params), params)
    om, _ = waveform(s, s.t_pre + 0.3 * s.period)
    J = params.J
    assert np.linalg.norm(om) == pytest.approx(J)
    assert abs(om[0]) == pytest.approx(math.sqrt(2 / 3) * J)
    assert abs(om[2]) == pytest.approx(math.sqrt(1 / 3) * J)


def test_wait_waveform_is_zero(params):
    s = schedule(catalog.build("PulsePol", params), params)
    w = next(p for p in s.pieces["core"]["S"] if p.kind == "wait")
    om, _ = waveform(s, s.t_pre + 0.5 * (w.t0 + w.t1))
    assert np.allclose(om, 0)


def test_out_of_range(params):
    s = schedule(catalog.build("SLIC", params), params)
    with pytest.raises(OutOfRange):
        s.locate(s.t_total * 2)


def test_infeasible_group(params):
    prog = SequenceProgram("tight", core=(pulse(1.0), wait(TimeSpec("s", 1e-6)), pulse(1.0)))
    with pytest.raises(InfeasibleSchedule) as err:
        schedule(prog, params)
    assert err.value.deficit_s > 0


def test_program_json_roundtrip(params):
    for name in catalog.NAMES:
        prog = catalog.build(name, params)
        back = SequenceProgram.loads(prog.dumps())
        assert back == prog
        assert schedule(back, params).t_total == pytest.approx(schedule(prog, params).t_total)


def test_program_json_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        SequenceProgram.from_json({"name": "x", "core": [], "bogus": 1})
    with pytest.raises(ConfigError):
        SequenceProgram.from_json({"name": "x", "core": [{"kind": "wait", "tau_spec": 1.0, "colour": 2}]})


def test_phase_names_in_json(params):
    prog = SequenceProgram.from_json({
        "name": "hand", "core": [{"kind": "pulse", "angle_pi_units": 1.0, "phase_name": "Ybar"},
                                 {"kind": "wait", "tau_spec": {"kind": "s", "value": 0.01}}]})
    assert prog.core[0].phase == pytest.approx(1.5 * math.pi)
    assert schedule(prog, params).period == pytest.approx(0.01)


def test_rotation_angle(params):
    assert rotation_angle(catalog.build("PulsePol", params), params) == pytest.approx(4 * math.pi)
    assert rotation_angle(catalog.build("SLIC", params), params) == pytest.approx(2 * math.pi)


def test_dual_channel_core_mismatch(params):
    prog = SequenceProgram("bad", core=(cw(WaveSpec.make("J"), angle_pi=2.0),
                                        pulse(1.0, channel="I"), wait(TimeSpec("s", 10.0), "I")))
    with pytest.raises(ConfigError):
        schedule(prog, params)


def test_constant_waveform_json():
    w = WaveSpec.from_json(12.5)
    assert w.kind == "const" and w.evaluate(None) == pytest.approx(hz(12.5))
    assert json.loads(json.dumps(w.to_json()))["hz"] == 12.5
