"""Operator algebra, parameters and states for the (I1, I2, S) spin system.

Tensor order is ``I1 ⊗ I2 ⊗ S`` throughout. Spin operators are halved Pauli
matrices and all frequencies are angular (rad/s) with hbar = 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Dict

import numpy as np

TWO_PI = 2.0 * np.pi

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex) / 2,
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex) / 2,
    "z": np.array([[1, 0], [0, -1]], dtype=complex) / 2,
}
_E2 = np.eye(2, dtype=complex)


def hz(value_hz: float) -> float:
    """Convert a frequency in Hz to angular frequency."""
    return TWO_PI * float(value_hz)


def to_hz(value_rad: float) -> float:
    """Convert an angular frequency to Hz."""
    return float(value_rad) / TWO_PI


@dataclass(frozen=True)
class SpinBasis:
    """Single-spin operators embedded in the 8-dimensional product space.

    Attributes
    ----------
    ops : dict
        Keys ``"Sx" ... "I2z"`` mapped to 8x8 complex matrices.
    identity : ndarray
    singlet, triplet0 : ndarray
        State vectors |S0>, |T0> of the hydrogen pair (length 4).
    P_singlet : ndarray
        Projector |S0><S0| ⊗ 1_S.
    """

    ops: Dict[str, np.ndarray]
    identity: np.ndarray
    singlet: np.ndarray
    triplet0: np.ndarray
    P_singlet: np.ndarray

    def __getitem__(self, key):
        return self.ops[key]

    def vec(self, spin: str):
        """Return the operator triple (x, y, z) of ``spin`` ("S", "I1", "I2", "I")."""
        if spin == "I":
            return [self.ops[f"I1{a}"] + self.ops[f"I2{a}"] for a in "xyz"]
        return [self.ops[f"{spin}{a}"] for a in "xyz"]


def _embed(i1, i2, s):
    return np.kron(np.kron(i1, i2), s)


def build_basis() -> SpinBasis:
    """Build the operator basis for the three-spin system."""
    ops = {}
    for a, p in _PAULI.items():
        ops["I1" + a] = _embed(p, _E2, _E2)
        ops["I2" + a] = _embed(_E2, p, _E2)
        ops["S" + a] = _embed(_E2, _E2, p)
    up, dn = np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)
    s0 = (np.kron(up, dn) - np.kron(dn, up)) / np.sqrt(2)
    t0 = (np.kron(up, dn) + np.kron(dn, up)) / np.sqrt(2)
    P = np.kron(np.outer(s0, s0.conj()), _E2)
    return SpinBasis(ops=ops, identity=np.eye(8, dtype=complex),
                     singlet=s0, triplet0=t0, P_singlet=P)


BASIS = build_basis()


def pseudospin_ops(basis: SpinBasis = BASIS):
    """Pseudospin (I_x, I_y, I_z) on span{|T0>, |S0>}, tensored with 1_S.

    I_z = (|T0><T0| - |S0><S0|)/2 and I_x = (|S0><T0| + |T0><S0|)/2.
    """
    s, t = basis.singlet, basis.triplet0
    st = np.outer(s, t.conj())
    ix = (st + st.conj().T) / 2
    iy = (1j * np.outer(s, t.conj()) - 1j * np.outer(t, s.conj())) / 2
    iz = (np.outer(t, t.conj()) - np.outer(s, s.conj())) / 2
    return [np.kron(m, _E2) for m in (ix, iy, iz)]


def reduced_basis_vectors(basis: SpinBasis = BASIS) -> np.ndarray:
    """Isometry (8x4) onto the m_I = 0 subspace span{S0, T0} ⊗ {up, down}.

    The hydrogen part is always the singlet/T0 pair, so every single-channel
    Hamiltonian of the model leaves this subspace invariant.
    """
    cols = []
    for h in (basis.singlet, basis.triplet0):
        for s in (np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)):
            cols.append(np.kron(h, s))
    return np.array(cols).T


@dataclass(frozen=True)
class MoleculeParams:
    """Molecular couplings and control limits, all in rad/s."""

    A: float
    A_sigma: float
    J: float
    Omega: float
    Omega_I: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{f.name} must be finite and >= 0, got {v}")

    def scaled_controls(self, factor: float) -> "MoleculeParams":
        """Return a copy with both Rabi limits multiplied by ``factor``."""
        return replace(self, Omega=self.Omega * factor, Omega_I=self.Omega_I * factor)

    def to_hz(self) -> dict:
        return {f.name: to_hz(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_hz(cls, **kw) -> "MoleculeParams":
        return cls(**{k: hz(v) for k, v in kw.items()})


PYRUVATE = MoleculeParams.from_hz(A=0.4, A_sigma=0.4, J=11.7, Omega=500.0, Omega_I=600.0)
PRESETS = {"pyruvate": PYRUVATE}

#: Chemical-shift reference for the pyruvate preset, (2π)·0.3 Hz.
PYRUVATE_DCS_REFERENCE = hz(0.3)


ERROR_KINDS = ("dDF", "d0", "d1", "dCS", "dRD")
_ERROR_FIELD = {"dDF": "deltaDF", "d0": "delta0", "d1": "delta1",
                "dCS": "deltaCS", "dRD": "deltaRD"}


@dataclass(frozen=True)
class ErrorParams:
    """Amplitudes of the five error terms, rad/s."""

    delta0: float = 0.0
    delta1: float = 0.0
    deltaDF: float = 0.0
    deltaRD: float = 0.0
    deltaCS: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if not np.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} must be finite")

    @property
    def nonlinear(self) -> bool:
        return self.deltaDF != 0.0 or self.deltaRD != 0.0

    def with_kind(self, kind: str, value: float) -> "ErrorParams":
        """Return a copy with error ``kind`` (e.g. ``"dDF"``) set to ``value``."""
        return replace(self, **{_ERROR_FIELD[kind]: float(value)})

    def get_kind(self, kind: str) -> float:
        return getattr(self, _ERROR_FIELD[kind])


@dataclass(frozen=True)
class Expectations:
    """Cached expectation values of a state."""

    Sx: float
    Sy: float
    Sz: float
    Ix: float
    Iy: float
    Iz: float
    Ix_ps: float = 0.0
    Iy_ps: float = 0.0
    Iz_ps: float = 0.0

    @property
    def p(self) -> float:
        """Fractional transfer 2<S_z>."""
        return 2.0 * self.Sz

    @property
    def S(self) -> np.ndarray:
        return np.array([self.Sx, self.Sy, self.Sz])


@dataclass(frozen=True)
class DensityState:
    """Density matrix in the 8-dimensional space with cached expectations."""

    rho: np.ndarray
    expect: Expectations = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "expect", expectations(self.rho))

    def check(self, tol_herm=1e-10, tol_trace=1e-10, tol_psd=1e-9) -> None:
        """Raise ``ValueError`` if the state violates the density-matrix invariants."""
        r = self.rho
        if np.max(np.abs(r - r.conj().T)) > tol_herm:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(r) - 1) > tol_trace:
            raise ValueError("density matrix trace differs from 1")
        if np.linalg.eigvalsh((r + r.conj().T) / 2).min() < -tol_psd:
            raise ValueError("density matrix has a negative eigenvalue")


_OBS_KEYS = ("Sx", "Sy", "Sz", "Ix", "Iy", "Iz", "Ix_ps", "Iy_ps", "Iz_ps")


def observable_stack(basis: SpinBasis = BASIS) -> np.ndarray:
    """Stack of the 9 cached observables, shape (9, 8, 8)."""
    s = basis.vec("S")
    i = basis.vec("I")
    return np.array(s + i + pseudospin_ops(basis))


_OBS = observable_stack()


def expectations(rho: np.ndarray) -> Expectations:
    """Expectation values tr(rho O) of the cached observables."""
    rho = np.asarray(rho)
    if rho.shape == (4, 4):
        rho = embed_reduced(rho)
    vals = np.real(np.einsum("ij,kji->k", rho, _OBS))
    return Expectations(*map(float, vals))


def initial_state() -> DensityState:
    """|S0><S0| on the hydrogens times the maximally mixed S spin."""
    s0 = BASIS.singlet
    rho = np.kron(np.outer(s0, s0.conj()), _E2 / 2)
    return DensityState(rho)


_V = reduced_basis_vectors()


def reduce_operator(op: np.ndarray) -> np.ndarray:
    """Project an 8x8 operator onto the m_I = 0 subspace (4x4)."""
    return _V.conj().T @ op @ _V


def embed_reduced(op4: np.ndarray) -> np.ndarray:
    """Embed a 4x4 operator on the m_I = 0 subspace back into 8x8."""
    return _V @ op4 @ _V.conj().T
