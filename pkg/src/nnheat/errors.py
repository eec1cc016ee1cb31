"""Exception hierarchy."""


class NNHeatError(Exception):
    """Base class for all package errors."""


class ConfigError(NNHeatError, ValueError):
    """Invalid configuration value, key or file."""


class RootFindingError(NNHeatError, RuntimeError):
    """A scalar constitutive solve did not converge."""


class LinearSolveFailed(NNHeatError, RuntimeError):
    """Sparse factorization or back-substitution failed."""


class PicardDiverged(NNHeatError, RuntimeError):
    """The outer fixed-point iteration did not reach its tolerance.

    Attributes
    ----------
    iterations : int
        Number of iterations performed.
    residual : float
        Last combined relative residual.
    """

    def __init__(self, message, iterations=0, residual=float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
