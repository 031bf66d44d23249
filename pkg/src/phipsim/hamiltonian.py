"""Rotating-frame Hamiltonian assembly.

The Hamiltonian is split into three parts so the propagator can treat each
efficiently:

* a static matrix (couplings, detuning, chemical shift),
* control coefficients multiplying the operator stack
  ``OPS = (S_x, S_y, S_z, I_x^tot, I_y^tot, I_z^tot)``,
* a mean-field part ``sum_k (sum_j M_kj <O_j>) O_k`` described by a 6x6 matrix.

The heteronuclear coupling is written as J1 S_z I1z + J2 S_z I2z with
A = J1 - J2 and A_sigma = J1 + J2, i.e. (A/2) S_z (I1z - I2z) +
(A_sigma/2) S_z (I1z + I2z). On the pseudospin pair {T0, S0} this is
A S_z I_x, the normalisation under which SLIC completes transfer at 2π/A.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spin import BASIS, ErrorParams, MoleculeParams

OPS = np.array(BASIS.vec("S") + BASIS.vec("I"))
OP_NAMES = ("Sx", "Sy", "Sz", "Ix", "Iy", "Iz")

#: Prefactor of Δ_CS multiplying (I1z - I2z). See ``static_hamiltonian``.
CS_PREFACTOR = 1.0

_II = sum(BASIS[f"I1{a}"] @ BASIS[f"I2{a}"] for a in "xyz")
_DIFF = BASIS["Sz"] @ (BASIS["I1z"] - BASIS["I2z"])
_SUM = BASIS["Sz"] @ (BASIS["I1z"] + BASIS["I2z"])
_IDIFF = BASIS["I1z"] - BASIS["I2z"]


@dataclass(frozen=True)
class DipolarFieldModel:
    """Mean-field dipolar model.

    Parameters
    ----------
    mode : {"S-only", "dual-species", "auto"}
        ``auto`` picks dual-species whenever the program drives the I channel.
    g : float
        Gyromagnetic ratio factor γ_I/γ_S.
    """

    mode: str = "auto"
    g: float = 3.98

    def resolve(self, two_channel: bool) -> "DipolarFieldModel":
        if self.mode != "auto":
            return self
        return DipolarFieldModel("dual-species" if two_channel else "S-only", self.g)


def static_hamiltonian(params: MoleculeParams, errors: ErrorParams | None = None) -> np.ndarray:
    """Time-independent part: J I1·I2 + couplings + Δ_0 S_z + Δ_CS term.

    Δ_CS enters as Δ_CS (I1z - I2z) with no factor 1/2; this reproduces the
    tabulated chemical-shift thresholds (the A coupling does carry 1/2).
    """
    H = params.J * _II + 0.5 * params.A * _DIFF + 0.5 * params.A_sigma * _SUM
    if errors is not None:
        H = H + errors.delta0 * BASIS["Sz"] + CS_PREFACTOR * errors.deltaCS * _IDIFF
    return H


def control_coefficients(omega_s, omega_i, params: MoleculeParams,
                         errors: ErrorParams | None = None) -> np.ndarray:
    """Coefficients of ``OPS`` for control vectors Ω⃗_S and Ω⃗_I.

    Δ_1 enters as Δ_1 H_ctrl,S / Ω, i.e. the S vector scaled by 1 + Δ_1/Ω.
    Arrays of shape (..., 3) are accepted.
    """
    omega_s = np.asarray(omega_s, dtype=float)
    omega_i = np.asarray(omega_i, dtype=float)
    scale = 1.0
    if errors is not None and errors.delta1 != 0.0:
        scale = 1.0 + errors.delta1 / params.Omega
    return np.concatenate([omega_s * scale, omega_i], axis=-1)


def mean_field_matrix(errors: ErrorParams, df_model: DipolarFieldModel | None = None) -> np.ndarray:
    """Coupling matrix M with nonlinear part sum_k (M @ <OPS>)_k OPS_k.

    S-only dipolar field: Δ(3<S_z>S_z - <S>·S) = Δ(2<S_z>S_z - <S_x>S_x - <S_y>S_y).
    Radiation damping: Δ_RD(<S_y>S_x - <S_x>S_y).
    Dual species adds g²Δ(3<I_z>I_z - <I>·I) + 2gΔ(<S_z>I_z + <I_z>S_z).
    """
    M = np.zeros((6, 6))
    d = errors.deltaDF
    if d:
        M[0, 0] = M[1, 1] = -d
        M[2, 2] = 2 * d
        if df_model is not None and df_model.mode == "dual-species":
            g = df_model.g
            M[3, 3] = M[4, 4] = -g * g * d
            M[5, 5] = 2 * g * g * d
            M[2, 5] += 2 * g * d
            M[5, 2] += 2 * g * d
    r = errors.deltaRD
    if r:
        M[0, 1] += r
        M[1, 0] -= r
    return M


def nonlinear_part(expect_vec, errors: ErrorParams, df_model: DipolarFieldModel | None = None) -> np.ndarray:
    """Mean-field Hamiltonian for expectations ``expect_vec`` of ``OPS``."""
    c = mean_field_matrix(errors, df_model) @ np.asarray(expect_vec, dtype=float)
    return np.tensordot(c, OPS, axes=1)


def dual_species_df(expect_vec, deltaDF: float, g: float = 3.98) -> np.ndarray:
    """Dual-species dipolar Hamiltonian for expectations of ``OPS``."""
    return nonlinear_part(expect_vec, ErrorParams(deltaDF=deltaDF),
                          DipolarFieldModel("dual-species", g))


def assemble(params: MoleculeParams, errors: ErrorParams, omega_s, omega_i,
             expect_vec=None, df_model: DipolarFieldModel | None = None) -> np.ndarray:
    """Full 8x8 Hamiltonian at one instant.

    Parameters
    ----------
    omega_s, omega_i : array_like, shape (3,)
        Control vectors (Ω cosφ, Ω sinφ, Δ) on S and on the hydrogens.
    expect_vec : array_like, shape (6,), optional
        Expectations of ``OPS``; zero if omitted.
    """
    H = static_hamiltonian(params, errors)
    c = control_coefficients(omega_s, omega_i, params, errors)
    H = H + np.tensordot(c, OPS, axes=1)
    if expect_vec is not None:
        H = H + nonlinear_part(expect_vec, errors, df_model)
    return H
