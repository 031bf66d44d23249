"""Simulation and robustness analysis of PHIP polarisation-transfer sequences.

The model is a three-spin system (two hydrogens I1, I2 and a heteronucleus S)
in the rotating frame, driven by pulse programs from :mod:`phipsim.catalog`
and propagated by :func:`phipsim.propagator.evolve`.
"""
__version__ = "0.1.0"

from ._backend import BACKEND
from .catalog import NAMES, analytic_Astar, build, resonance_solve
from .errors import (ConfigError, DegenerateResonance, FitFailure, InfeasibleSchedule, NoFormula,
                     NonConvergence, PhipsimError, PrecessionFormError, ResonanceViolation,
                     UnknownSequence)
from .propagator import EvolveOptions, Trajectory, evolve, transfer_curve_fit
from .sequence import SequenceProgram, schedule
from .spin import PYRUVATE, ErrorParams, MoleculeParams, hz, to_hz

__all__ = [
    "BACKEND", "NAMES", "PYRUVATE", "ConfigError", "DegenerateResonance", "ErrorParams", "EvolveOptions",
    "FitFailure", "InfeasibleSchedule", "MoleculeParams", "NoFormula", "NonConvergence", "PhipsimError",
    "PrecessionFormError", "ResonanceViolation", "SequenceProgram", "Trajectory", "UnknownSequence",
    "analytic_Astar", "build", "evolve", "hz", "resonance_solve", "schedule", "to_hz",
    "transfer_curve_fit",
]
