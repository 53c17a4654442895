from __future__ import annotations
import typing as t

if t.TYPE_CHECKING:
    from density_grid import DensityMatrixGrid


class KinbathError(Exception):
    exit_code = 1


class ConfigError(KinbathError):
    exit_code = 2

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class DomainError(KinbathError, ValueError):
    """An operation was called outside its precondition."""


class OutOfDomainError(DomainError):
    pass


class SingularDerivativeError(DomainError):
    pass


class AliasingError(DomainError):
    pass


class IllConditionedError(DomainError):
    pass


class UnnormalizedStateError(DomainError):
    pass


class InvalidCorrelatorError(KinbathError):
    pass


class TransformationMismatch(KinbathError):
    exit_code = 3


class NumericalAbort(KinbathError):
    exit_code = 3

    def __init__(self, message: str, last_valid: "DensityMatrixGrid | None" = None):
        super().__init__(message)
        self.last_valid = last_valid


class VerificationFailure(KinbathError):
    exit_code = 4


class MissingArtifactError(KinbathError):
    """A run directory lacks an output that a later step reads."""
