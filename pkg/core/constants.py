from __future__ import annotations

import enum

from lamb.json.mixins import ResponseEncodableMixin

__all__ = ["ModelName", "DomainKind", "OutputFormat", "CommandName", "WILSON_Z95"]


# numeric constants
WILSON_Z95 = 1.959964


# utils
class _EnumMixin(ResponseEncodableMixin):
    title: str | None = None

    def __new__(cls, code, title, *args, **kwargs):
        obj = object.__new__(cls)
        obj._value_ = code
        obj.__post_init__(code, title, *args, **kwargs)
        return obj

    def __post_init__(self, code, title, *args, **kwargs):
        self.title = title

    def response_encode(self, request=None) -> str:
        return self.value

    @classmethod
    def codes(cls) -> list[str]:
        return [e.value for e in cls]


# model registry
@enum.unique
class ModelName(_EnumMixin, enum.Enum):
    # physical systems
    WALL_GRAVITY = ("wall-gravity", "Particle between soft walls under gravity and double-layer forces")
    DLVO_PAIR = ("dlvo-pair", "Two particles with DLVO interaction in a shallow harmonic trap")
    ROTATIONAL_PORE = ("rotational-pore", "Particle in a circular pore under a rotational force field")

    # benchmarks
    CONSTANT = ("constant", "Constant friction and noise in a harmonic trap")
    NOISELESS = ("noiseless", "Constant friction in a harmonic trap without noise")
    FD_CONSTANT = ("fd-constant", "Fluctuation-dissipation model with constant diffusion")
    EXPLOSIVE = ("explosive", "Deterministic quadratic drift that explodes in finite time")


@enum.unique
class DomainKind(_EnumMixin, enum.Enum):
    INTERVAL = ("interval", "Open interval (a, b)")
    HALF_PLANE_ORDER = ("half-plane-order", "Ordered pairs x1 < x2")
    DISK = ("disk", "Open disk of radius C")
    ALL_SPACE = ("all-space", "Whole space")


# command line
@enum.unique
class OutputFormat(_EnumMixin, enum.Enum):
    CSV = ("csv", "Comma separated values")
    JSON = ("json", "JSON document")


@enum.unique
class CommandName(_EnumMixin, enum.Enum):
    SIMULATE = ("simulate", "Single coupled trajectory")
    CONVERGE = ("converge", "Exceedance probabilities over a mass ladder")
    EXIT_TIMES = ("exit-times", "Exit probabilities over a mass ladder")
    LYAPUNOV_CHECK = ("lyapunov-check", "Non-explosivity conditions p1 and p2")
    DRIFT_CHECK = ("drift-check", "Noise-induced drift against the analytic gradient of D")
