from __future__ import annotations

import enum

from lamb.exc import ApiError

__all__ = [
    "AppErrorCodes",
    "KramersError",
    "SingularSystemError",
    "FrictionNotPositiveError",
    "BoundaryTooCloseError",
    "HorizonTooShortError",
    "SamplingFailureError",
    "NonFiniteStateError",
    "QuarantineExceededError",
    "ParameterDomainError",
    "DomainMismatchError",
    "DomainError",
    "ConfigurationError",
    "UnknownModelError",
    "KramersWarning",
    "ParameterWarning",
    "ResolutionWarning",
]


@enum.unique
class AppErrorCodes(enum.IntEnum):
    # numerical
    SingularSystem = 2001
    FrictionNotPositive = 2002
    BoundaryTooClose = 2003
    HorizonTooShort = 2004
    SamplingFailure = 2005
    NonFiniteState = 2006
    QuarantineExceeded = 2007

    # configuration
    ParameterDomain = 1001
    DomainMismatch = 1002
    Domain = 1003
    Configuration = 1004
    UnknownModel = 1005


class KramersError(ApiError):
    _status_code = 500
    _message = "Numerical failure"

    # process exit status reported by the command line
    exit_code: int = 2

    def __init__(self, message: str | None = None, *args, **kwargs):
        super().__init__(message or self._message, *args, **kwargs)
        self.detail = message or self._message

    def __str__(self) -> str:
        return self.detail


# numerical failures
class SingularSystemError(KramersError):
    _app_error_code = AppErrorCodes.SingularSystem
    _message = "Linear system is numerically singular"


class FrictionNotPositiveError(SingularSystemError):
    _app_error_code = AppErrorCodes.FrictionNotPositive
    _message = "Friction matrix symmetric part is not positive-definite"


class BoundaryTooCloseError(KramersError):
    _app_error_code = AppErrorCodes.BoundaryTooClose
    _message = "Point is closer to the domain boundary than the differentiation step"


class HorizonTooShortError(KramersError):
    _app_error_code = AppErrorCodes.HorizonTooShort
    _message = "Quadrature horizon too short for the exponential tail bound"


class SamplingFailureError(KramersError):
    _app_error_code = AppErrorCodes.SamplingFailure
    _message = "No sampleable points in the requested region"


class NonFiniteStateError(KramersError):
    _app_error_code = AppErrorCodes.NonFiniteState
    _message = "Integrator produced a non-finite state"


class QuarantineExceededError(KramersError):
    _app_error_code = AppErrorCodes.QuarantineExceeded
    _message = "Aborted path fraction exceeds the quarantine threshold"

    def __init__(self, message: str | None = None, *args, table=None, **kwargs):
        super().__init__(message, *args, **kwargs)
        self.table = table


# configuration failures
class ParameterDomainError(KramersError):
    _status_code = 400
    _app_error_code = AppErrorCodes.ParameterDomain
    _message = "Parameter outside of its admissible domain"
    exit_code = 1


class DomainMismatchError(ParameterDomainError):
    _app_error_code = AppErrorCodes.DomainMismatch
    _message = "Diffusion profile is not defined on the whole domain"


class DomainError(ParameterDomainError):
    _app_error_code = AppErrorCodes.Domain
    _message = "Argument outside of the function domain"


class ConfigurationError(ParameterDomainError):
    _app_error_code = AppErrorCodes.Configuration
    _message = "Invalid run configuration"


class UnknownModelError(ConfigurationError):
    _app_error_code = AppErrorCodes.UnknownModel
    _message = "Unknown model name"


# soft warnings routed into the log through captureWarnings
class KramersWarning(UserWarning):
    pass


class ParameterWarning(KramersWarning):
    pass


class ResolutionWarning(KramersWarning):
    pass
