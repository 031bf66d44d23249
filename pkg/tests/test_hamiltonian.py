import numpy as np
import pytest

from phipsim.hamiltonian import (DipolarFieldModel, assemble, dual_species_df, mean_field_matrix,
                                 nonlinear_part, static_hamiltonian)
from phipsim.spin import BASIS, ErrorParams, MoleculeParams


def test_zero_everything_is_zero():
    p = MoleculeParams(0, 0, 0, 0, 0)
    H = assemble(p, ErrorParams(), np.zeros(3), np.zeros(3), np.zeros(6))
    assert np.allclose(H, 0)


def test_dipolar_field_on_polarised_S():
    d = 3.0
    H = nonlinear_part([0, 0, 0.5, 0, 0, 0], ErrorParams(deltaDF=d))
    expect = d * (3 * 0.5 * BASIS["Sz"] - 0.5 * BASIS["Sz"])
    assert np.allclose(H, expect)


def test_radiation_damping_on_Sx():
    r = 2.0
    H = nonlinear_part([0.5, 0, 0, 0, 0, 0], ErrorParams(deltaRD=r))
    assert np.allclose(H, -(r / 2) * BASIS["Sy"])


def test_dual_species_singlet_is_zero():
    assert np.allclose(dual_species_df(np.zeros(6), 5.0, 4.0), 0)


def test_dual_species_I_term_scales_with_g_squared():
    d = 1.0
    Iz = BASIS.vec("I")[2]
    H = dual_species_df([0, 0, 0, 0, 0, 1.0], d, g=4.0)
    # S terms vanish with <S> = 0; the I term is g² Δ (3<Iz>Iz - <I>·I) plus the cross term
    expected = 16 * d * 2 * Iz + 2 * 4 * d * 1.0 * BASIS["Sz"]
    assert np.allclose(H, expected)


def test_dual_species_g_zero_reduces_to_S_only():
    ex = [0.1, -0.2, 0.3, 0.05, 0.0, 0.4]
    e = ErrorParams(deltaDF=2.0)
    a = nonlinear_part(ex, e, DipolarFieldModel("dual-species", 0.0))
    b = nonlinear_part(ex, e, DipolarFieldModel("S-only"))
    assert np.allclose(a, b)


def test_mean_field_matrix_symmetric_part():
    M = mean_field_matrix(ErrorParams(deltaDF=1.0), DipolarFieldModel("dual-species", 3.98))
    assert np.allclose(M, M.T)
    assert np.trace(M[:3, :3]) == pytest.approx(0.0)


def test_static_hamiltonian_hermitian(params):
    H = static_hamiltonian(params, ErrorParams(delta0=1.0, deltaCS=0.5))
    assert np.allclose(H, H.conj().T)


def test_auto_model_resolution():
    assert DipolarFieldModel().resolve(True).mode == "dual-species"
    assert DipolarFieldModel().resolve(False).mode == "S-only"
