import math

import numpy as np
import pytest

from phipsim import _kernel_py, catalog
from phipsim._backend import midpoint_evolve
from phipsim.errors import FitFailure, NonConvergence, PathViolation
from phipsim.propagator import EvolveOptions, evolve, evolve_linear_cached, transfer_curve_fit
from phipsim.sequence import SequenceProgram, TimeSpec, pulse, schedule, wait
from phipsim.spin import ErrorParams, MoleculeParams, hz


def _run(name, params, errors=None, **opts):
    s = schedule(catalog.build(name, params), params)
    return evolve(s, errors, EvolveOptions(**opts))


def test_zero_hamiltonian_keeps_state():
    p = MoleculeParams(0, 0, 0, hz(1.0), hz(1.0))
    prog = SequenceProgram("idle", core=(wait(TimeSpec("s", 0.05)),), reps=3)
    traj = evolve(schedule(prog, p), None, EvolveOptions(n_samples=5))
    assert np.allclose(traj.p, 0.0)
    assert np.allclose(traj.column("Iz_ps"), traj.column("Iz_ps")[0])


def test_slic_transfers(params):
    assert _run("SLIC", params, n_samples=2).p_final >= 0.98


def test_extra_pi_pulse_flips_sign(params):
    base = catalog.build("SLIC", params)
    flipped = SequenceProgram(base.name, pre=base.pre, core=base.core,
                              post=base.post + (pulse(1.0),), reps=base.reps)
    a = evolve(schedule(base, params), None, EvolveOptions(n_samples=2)).p_final
    b = evolve(schedule(flipped, params), None, EvolveOptions(n_samples=2)).p_final
    # couplings keep acting during the 2 ms pulse, hence not exact
    assert b == pytest.approx(-a, abs=1e-5)


@pytest.mark.parametrize("name", ["SLIC", "PulsePol", "MREVpol", "PP+XY", "LG-SLIC"])
def test_paths_agree_without_mean_field(params, name):
    s = schedule(catalog.build(name, params), params)
    e = ErrorParams(delta0=hz(0.3))
    a = evolve(s, e, EvolveOptions(path="linear", n_samples=2))
    b = evolve(s, e, EvolveOptions(path="nonlinear", n_samples=2))
    assert np.abs(a.rho_final - b.rho_final).max() <= 1e-8


def test_spectrum_preserved_under_mean_field(params):
    traj = _run("SLIC", params, ErrorParams(deltaDF=hz(0.3)), n_samples=2)
    rho = traj.rho_final
    assert np.allclose(rho, rho.conj().T, atol=1e-12)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-9)
    w = np.sort(np.linalg.eigvalsh(rho))
    assert np.abs(w - np.array([0] * 6 + [0.5, 0.5])).max() <= 1e-9


def test_kernels_agree(rng):
    d, nops, nsteps = 4, 3, 40
    a = rng.normal(size=(nops, d, d)) + 1j * rng.normal(size=(nops, d, d))
    ops = np.ascontiguousarray(a + np.swapaxes(a.conj(), -1, -2))
    b = rng.normal(size=(2, d, d)) + 1j * rng.normal(size=(2, d, d))
    Hlin = np.ascontiguousarray(b + np.swapaxes(b.conj(), -1, -2))
    idx = (np.arange(nsteps) % 2).astype(np.int64)
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    psi /= np.linalg.norm(psi)
    rho0 = np.ascontiguousarray(np.outer(psi, psi.conj()))
    dt = np.full(nsteps, 0.01)
    M = np.ascontiguousarray(0.3 * rng.normal(size=(nops, nops)))
    pick = np.array([0, 19, 39], dtype=np.int64)
    args = (rho0, Hlin, idx, ops, dt, M, 20, 1e-13, pick, ops)
    r1, rec1, res1 = midpoint_evolve(*args)
    r2, rec2, res2 = _kernel_py.midpoint_evolve(*args)
    assert np.abs(np.asarray(r1) - r2).max() <= 1e-12
    assert np.abs(np.asarray(rec1) - np.asarray(rec2)).max() <= 1e-12


def test_fit_slic(params):
    traj = _run("SLIC", params, n_samples=800)
    assert transfer_curve_fit(traj) / params.A == pytest.approx(1.0, rel=0.01)


def test_fit_pulsepol(params):
    traj = _run("PulsePol", params, n_samples=800)
    assert transfer_curve_fit(traj) / params.A == pytest.approx(0.70, abs=0.02)


def test_fit_end_amp_swept(params):
    traj = _run("amp swept SLIC", params, ErrorParams(deltaDF=hz(3.0)), n_samples=50)
    assert transfer_curve_fit(traj, "end") / params.A == pytest.approx(0.33, abs=0.03)


def test_fit_failure_without_transfer(params):
    traj = _run("PulsePol", params, ErrorParams(delta0=hz(1000.0)), n_samples=200)
    with pytest.raises(FitFailure):
        transfer_curve_fit(traj)
    with pytest.raises(FitFailure):
        transfer_curve_fit(traj, "end")


def test_core_propagator_is_cached(params):
    a = evolve_linear_cached(schedule(catalog.build("PulsePol", params), params))
    b = evolve_linear_cached(schedule(catalog.build("PulsePol", params, reps=38), params))
    assert a.stats["unique_propagators"] == b.stats["unique_propagators"]


def test_linear_path_refuses_mean_field(params):
    s = schedule(catalog.build("SLIC", params), params)
    with pytest.raises(PathViolation):
        evolve(s, ErrorParams(deltaDF=1.0), EvolveOptions(path="linear"))


def test_nonconvergence_reported(params):
    s = schedule(catalog.build("SLIC", params), params)
    opts = EvolveOptions(midpoint_iterations=1, dt_max=1e-2, nl_phase_step=1e3, n_samples=2)
    with pytest.raises(NonConvergence):
        evolve(s, ErrorParams(deltaDF=hz(300.0)), opts)


def test_sampling_covers_whole_run(params):
    traj = _run("SLIC", params, n_samples=11)
    s = schedule(catalog.build("SLIC", params), params)
    assert traj.times[0] == 0.0
    assert traj.times[-1] == pytest.approx(s.t_total)
    assert traj.p[-1] == pytest.approx(traj.p_final, abs=1e-12)
    assert math.isclose(traj.t_core[1] - traj.t_core[0], s.reps * s.period)
