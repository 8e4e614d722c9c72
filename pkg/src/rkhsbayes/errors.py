"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to.
"""


class RKHSBayesError(Exception):
    exit_code = 1


class UsageError(RKHSBayesError):
    exit_code = 2


class InputError(RKHSBayesError, ValueError):
    exit_code = 3


class NumericalError(RKHSBayesError, ArithmeticError):
    """A factorization or linear solve failed even after regularization."""

    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class AccuracyError(NumericalError):
    """An oracle could not reach its requested accuracy.

    ``best_estimate`` holds the value computed before giving up.
    """

    def __init__(self, message, best_estimate=None, diagnostics=None):
        super().__init__(message, diagnostics)
        self.best_estimate = best_estimate


class ConvergenceError(RKHSBayesError):
    exit_code = 5

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class ExperimentError(RKHSBayesError):
    exit_code = 4
