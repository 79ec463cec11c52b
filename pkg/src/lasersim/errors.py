"""Exception hierarchy shared by all modules."""


class LaserSimError(Exception):
    """Base class for every error raised by lasersim."""


class ConfigError(LaserSimError, ValueError):
    """Invalid parameters or malformed configuration."""


class RegimeError(LaserSimError, ValueError):
    """Operation requested outside the parameter regime it is defined for."""


class HypothesisError(LaserSimError, ValueError):
    """Input data does not satisfy the hypotheses of a bound or check."""


class NumericalAbort(LaserSimError, RuntimeError):
    """Integration produced a state that breaks a numerical invariant."""


class TruncationError(NumericalAbort):
    """Too much population near the Fock cutoff; increase n_max."""


class PositivityError(NumericalAbort):
    """A density matrix lost positivity beyond the allowed noise level."""


class PhaseUndefinedError(LaserSimError, ValueError):
    """The field amplitude is zero, so its phase has no meaning."""


class SingularTrajectoryError(NumericalAbort):
    """The field amplitude dropped below the polar-coordinate floor."""


class NoConvergenceError(NumericalAbort):
    """An iterative or long-time procedure did not settle within its budget."""
