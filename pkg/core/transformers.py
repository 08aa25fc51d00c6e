from __future__ import annotations

import logging
import math
from typing import TypeVar

import lamb.exc as exc
from lamb.utils.transformers import transform_string_enum

from core.constants import CommandName, ModelName, OutputFormat
from core.exc import ConfigurationError, KramersError, UnknownModelError

__all__ = [
    "tf_model_name",
    "tf_output_format",
    "tf_command_name",
    "tf_list_float",
    "tf_positive_float",
]

logger = logging.getLogger(__name__)

ET = TypeVar("ET")


def _tf_enum(value, enum_class: type[ET], error: KramersError) -> ET:
    if isinstance(value, enum_class):
        return value
    # exact code first, lamb transformer handles the remaining spellings
    try:
        return enum_class(value)
    except ValueError:
        pass
    try:
        result = transform_string_enum(value=value, enum_class=enum_class)
    except (KeyError, TypeError, ValueError, exc.ApiError) as e:
        raise error from e
    if not isinstance(result, enum_class):
        raise error
    return result


def tf_model_name(value: str | ModelName) -> ModelName:
    error = UnknownModelError(f"Unknown model '{value}', built-ins: {', '.join(ModelName.codes())}")
    return _tf_enum(value, ModelName, error)


def tf_output_format(value: str | OutputFormat) -> OutputFormat:
    error = ConfigurationError(f"Unknown output format '{value}', expected one of: {', '.join(OutputFormat.codes())}")
    return _tf_enum(value, OutputFormat, error)


def tf_command_name(value: str | CommandName) -> CommandName:
    error = ConfigurationError(f"Unknown command '{value}', expected one of: {', '.join(CommandName.codes())}")
    return _tf_enum(value, CommandName, error)


def tf_list_float(value: str | float | list | tuple) -> list[float]:
    """Parses '1e-1,1e-2' style lists, numbers and sequences"""
    if isinstance(value, int | float):
        items = [value]
    elif isinstance(value, str):
        items = [v for v in value.replace(" ", "").split(",") if v]
    else:
        items = list(value)
    try:
        result = [float(v) for v in items]
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"Invalid number list: {value!r}") from e
    if not result or not all(math.isfinite(v) for v in result):
        raise ConfigurationError(f"Invalid number list: {value!r}")
    return result


def tf_positive_float(value: str | float, name: str = "value") -> float:
    try:
        result = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"{name} must be a number, got {value!r}") from e
    if not math.isfinite(result) or result <= 0:
        raise ConfigurationError(f"{name} must be positive, got {value!r}")
    return result
