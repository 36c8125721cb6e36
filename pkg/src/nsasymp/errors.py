"""Exception hierarchy. ``exit_code`` is the CLI contract for each failure class."""


class NSAsympError(Exception):
    exit_code = 1


class ConfigurationError(NSAsympError, ValueError):
    exit_code = 2


class DataError(NSAsympError, ValueError):
    exit_code = 2


class PreconditionError(NSAsympError, ValueError):
    exit_code = 2


class EvaluationError(NSAsympError, ArithmeticError):
    exit_code = 1


class ResolutionError(NSAsympError, ValueError):
    exit_code = 2


class UnsupportedOrderError(NSAsympError, ValueError):
    exit_code = 2


class DomainError(NSAsympError, ValueError):
    exit_code = 1


class BlowUpError(NSAsympError, RuntimeError):
    exit_code = 3

    def __init__(self, message, last_stable_time=None):
        super().__init__(message)
        self.last_stable_time = last_stable_time


class TailMassError(NSAsympError, RuntimeError):
    exit_code = 4


class MomentUnreliableError(NSAsympError, RuntimeError):
    exit_code = 4


class TailDivergentError(NSAsympError, RuntimeError):
    exit_code = 5


class QuadratureError(NSAsympError, RuntimeError):
    exit_code = 6


class DependencyError(NSAsympError, KeyError):
    exit_code = 1

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class WindowError(NSAsympError, ValueError):
    exit_code = 1


class NormUnreliableError(NSAsympError, RuntimeError):
    exit_code = 4
