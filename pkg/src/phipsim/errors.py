"""Exception hierarchy shared by all phipsim modules."""


class PhipsimError(Exception):
    """Base class for all library errors."""


class InfeasibleSchedule(PhipsimError):
    """Pulses do not fit into the wait time available to their group."""

    def __init__(self, group, deficit_s):
        self.group = group
        self.deficit_s = float(deficit_s)
        super().__init__(
            f"wait group {group!r} is short by {self.deficit_s:.6g} s "
            "(filling factor > 1)"
        )


class OutOfRange(PhipsimError):
    """Time requested outside of a schedule."""


class UnknownSequence(PhipsimError):
    """Sequence name not present in the catalog."""


class ResonanceViolation(PhipsimError):
    """Requested parameters break the sequence's resonance rule."""


class DegenerateResonance(ResonanceViolation):
    """Phase choice for which no transfer resonance exists."""


class NoFormula(PhipsimError):
    """No closed-form effective coupling is known for the sequence."""


class NonConvergence(PhipsimError):
    """Implicit-midpoint fixed point did not converge."""

    def __init__(self, residual, tol):
        self.residual = float(residual)
        super().__init__(f"midpoint residual {self.residual:.3g} exceeds {tol:.1g}")


class PathViolation(PhipsimError):
    """Linear propagation requested while nonlinear terms are active."""


class FitFailure(PhipsimError):
    """Transfer curve never reached the level needed for a fit."""


class ConfigError(PhipsimError):
    """Invalid run configuration (CLI exit code 2)."""


class PrecessionFormError(PhipsimError):
    """Core propagator is not a pure z rotation, so α is undefined."""

    def __init__(self, offdiag):
        self.offdiag = float(offdiag)
        super().__init__(f"core rotation leaves the z axis by {self.offdiag:.3g}; alpha undefined")
