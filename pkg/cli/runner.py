from __future__ import annotations

import dataclasses
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np
from django.conf import settings

from core.constants import CommandName, OutputFormat
from core.exc import ConfigurationError, KramersError, QuarantineExceededError
from core.integrators import simulate_coupled, time_steps
from core.lyapunov import noise_induced_drift
from core.lyapunov_check import check_model_lyapunov
from core.models import Model, build_model, load_model_document
from core.montecarlo import ExperimentPlan, estimate_exceedance, estimate_exit_probability, resolve_threads
from core.transformers import tf_command_name, tf_list_float, tf_model_name, tf_output_format, tf_positive_float
from core.utils import atomic_write_text, dump_json, header_lines

__all__ = ["RunConfig", "RunOutcome", "run", "DRIFT_TOLERANCE"]

logger = logging.getLogger(__name__)

DRIFT_TOLERANCE = 1e-6

_DEFAULTS = {
    "T": 1.0,
    "dt": 1e-5,
    "masses": (1e-1, 1e-2, 1e-3, 1e-4),
    "epsilon": (0.05,),
    "n_paths": 400,
    "seed": 0,
}

# flag name -> config document key
_FLAG_KEYS = {
    "masses": "masses",
    "eps": "epsilon",
    "T": "T",
    "dt": "dt",
    "paths": "n_paths",
    "seed": "seed",
    "x0": "x0",
    "v0": "v0",
}


def _tf_int(value, name: str, minimum: int = 0) -> int:
    try:
        result = int(value)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"{name} must be an integer, got {value!r}") from e
    if isinstance(value, float) and not value.is_integer():
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    if result < minimum:
        raise ConfigurationError(f"{name} must be >= {minimum}, got {value!r}")
    return result


def _tf_nonnegative_float(value, name: str) -> float:
    try:
        result = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"{name} must be a number, got {value!r}") from e
    if not math.isfinite(result) or result < 0:
        raise ConfigurationError(f"{name} must be nonnegative, got {value!r}")
    return result


def _parse_params(items) -> dict[str, float]:
    result = {}
    for item in items or []:
        key, sep, value = str(item).partition("=")
        if not sep or not key:
            raise ConfigurationError(f"Model parameter must look like name=value, got {item!r}")
        try:
            result[key.strip()] = float(value)
        except ValueError as e:
            raise ConfigurationError(f"Model parameter {key} must be a number, got {value!r}") from e
    return result


@dataclasses.dataclass(frozen=True)
class RunConfig:
    command: CommandName
    model_name: str
    params: dict[str, Any]
    T: float
    dt: float
    masses: tuple[float, ...]
    epsilon: tuple[float, ...]
    n_paths: int
    seed: int
    x0: tuple[float, ...] | None = None
    v0: tuple[float, ...] | None = None
    out: Path | None = None
    output_format: OutputFormat = OutputFormat.CSV
    threads: int | None = None
    stride: int = 1
    config_path: Path | None = None

    @classmethod
    def from_options(cls, command: str | CommandName, options: dict) -> RunConfig:
        """Flags override the JSON document, which overrides built-in defaults"""
        command = tf_command_name(command)
        document = load_model_document(options["config"])[1] if options.get("config") else {}

        model_name = options.get("model") or document.get("model")
        if not model_name:
            raise ConfigurationError("No model given: pass --model or a config document with a 'model' key")
        model_name = tf_model_name(model_name).value
        params = {}
        if document.get("model") is not None and tf_model_name(document["model"]).value == model_name:
            params = dict(document.get("params") or {})
        elif document.get("params"):
            logger.warning(f"config params for model {document.get('model')} ignored, running {model_name}")
        params.update(_parse_params(options.get("param")))

        resolved = dict(_DEFAULTS)
        for key in _FLAG_KEYS.values():
            if key in document:
                resolved[key] = document[key]
        for flag, key in _FLAG_KEYS.items():
            if options.get(flag) is not None:
                resolved[key] = options[flag]

        threads = options.get("threads")
        out = options.get("out")
        config = cls(
            command=command,
            model_name=model_name,
            params=params,
            T=_tf_nonnegative_float(resolved["T"], "T"),
            dt=tf_positive_float(resolved["dt"], "dt"),
            masses=tuple(tf_list_float(resolved["masses"])),
            epsilon=tuple(tf_list_float(resolved["epsilon"])),
            n_paths=_tf_int(resolved["n_paths"], "paths", minimum=1),
            seed=_tf_int(resolved["seed"], "seed"),
            x0=None if resolved.get("x0") is None else tuple(tf_list_float(resolved["x0"])),
            v0=None if resolved.get("v0") is None else tuple(tf_list_float(resolved["v0"])),
            out=None if not out else Path(out),
            output_format=tf_output_format(options.get("format") or OutputFormat.CSV),
            threads=None if threads is None else _tf_int(threads, "threads"),
            stride=_tf_int(options.get("stride") or 1, "stride", minimum=1),
            config_path=None if not options.get("config") else Path(options["config"]),
        )
        config.validate()
        return config

    def build_model(self) -> Model:
        return build_model(self.model_name, self.params)

    def plan(self) -> ExperimentPlan:
        return ExperimentPlan(
            model_name=self.model_name,
            params=dict(self.params),
            x0=self.x0,
            v0=self.v0,
            T=self.T,
            dt=self.dt,
            epsilon=self.epsilon,
            masses=self.masses,
            n_paths=self.n_paths,
            master_seed=self.seed,
        )

    def validate(self) -> None:
        model = self.build_model()
        if self.command in (CommandName.CONVERGE, CommandName.EXIT_TIMES):
            self.plan().validate()
        if self.x0 is not None:
            x0 = np.asarray(self.x0, dtype=float)
            if x0.shape != (model.dim_n,) or not model.domain.contains(x0[None])[0]:
                raise ConfigurationError(f"x0={list(self.x0)} is not a point of the {model.name} domain")
        if self.v0 is not None and len(self.v0) != model.dim_n:
            raise ConfigurationError(f"v0 must have {model.dim_n} components")
        if self.command == CommandName.SIMULATE and self.masses[0] <= 0:
            raise ConfigurationError(f"Mass must be positive, got {self.masses[0]}")
        if self.command == CommandName.SIMULATE:
            time_steps(self.T, self.dt)
        if self.threads is not None:
            resolve_threads(self.threads)

    def as_dict(self) -> dict:
        return {
            "command": self.command.value,
            "model": self.model_name,
            "params": dict(self.params),
            "T": self.T,
            "dt": self.dt,
            "masses": list(self.masses),
            "epsilon": list(self.epsilon),
            "n_paths": self.n_paths,
            "seed": self.seed,
            "x0": None if self.x0 is None else list(self.x0),
            "v0": None if self.v0 is None else list(self.v0),
            "format": self.output_format.value,
            "stride": self.stride,
            "version": settings.KRAMERS_APP_VERSION,
        }

    def output_path(self, suffix: str | None = None) -> Path:
        suffix = suffix or self.output_format.value
        if self.out is not None:
            return self.out
        name = f"{self.command.value}-{self.model_name}-seed{self.seed}.{suffix}"
        return Path(settings.KRAMERS_OUTPUT_FOLDER) / name


@dataclasses.dataclass(frozen=True)
class RunOutcome:
    status: int
    summary: str
    artifacts: tuple[Path, ...] = ()


# commands
def _run_simulate(config: RunConfig) -> RunOutcome:
    model = config.build_model()
    m = config.masses[0]
    x0 = model.x0 if config.x0 is None else config.x0
    pair = simulate_coupled(model, x0, config.v0, m=m, T=config.T, dt=config.dt, master_seed=config.seed, path_index=0)
    if config.output_format == OutputFormat.JSON:
        body = dump_json(
            {
                "config": config.as_dict(),
                "sup_distance": pair.sup_distance,
                "exit_time_m": pair.exit_time_m,
                "exit_time_limit": pair.exit_time_limit,
                "aborted": pair.aborted,
                "t": pair.times[:: config.stride].tolist(),
                "x_m": pair.x_m[:: config.stride].tolist(),
                "v_m": pair.v_m[:: config.stride].tolist(),
                "x_limit": pair.x_limit[:: config.stride].tolist(),
            }
        )
    else:
        body = header_lines(config.as_dict()) + pair.to_csv(stride=config.stride)
    path = atomic_write_text(config.output_path(), body)
    summary = f"sup_distance={pair.sup_distance:.6g} exit_m={pair.exit_time_m} exit_limit={pair.exit_time_limit} -> {path}"
    return RunOutcome(status=0, summary=summary, artifacts=(path,))


def _write_table(config: RunConfig, table) -> tuple[Path, ...]:
    table.config = {**table.config, **config.as_dict()}
    body = table.to_json() if config.output_format == OutputFormat.JSON else table.to_csv()
    path = atomic_write_text(config.output_path(), body)
    companion = atomic_write_text(path.with_suffix(".dat"), table.to_gnuplot())
    return path, companion


def _run_experiment(config: RunConfig) -> RunOutcome:
    plan = config.plan()
    model = config.build_model()
    estimate = estimate_exceedance if config.command == CommandName.CONVERGE else estimate_exit_probability
    try:
        table = estimate(plan, model=model, threads=config.threads)
    except QuarantineExceededError as e:
        if e.table is not None:
            _write_table(config, e.table)
        raise
    artifacts = _write_table(config, table)
    return RunOutcome(status=0, summary=f"table written: {artifacts[0]}", artifacts=artifacts)


def _run_lyapunov_check(config: RunConfig) -> RunOutcome:
    model = config.build_model()
    report = check_model_lyapunov(model, seed=config.seed)
    document = {"config": config.as_dict(), **report.as_dict()}
    path = atomic_write_text(config.output_path("json"), dump_json(document))
    verdict = "PASS" if report.passed else "FAIL"
    p1 = "PASS" if report.p1_pass else "FAIL"
    p2 = "PASS" if report.p2.passed else "FAIL"
    summary = f"{verdict} p1={p1} p2={p2} C={report.p2.C:g} D={report.p2.D:.6g} -> {path}"
    return RunOutcome(status=0, summary=summary, artifacts=(path,))


def drift_check_points(model: Model, count: int = 1000, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.concatenate(
        [
            model.domain.sample_interior(rng, count, margin=1e-3),
            model.domain.near_boundary(np.geomspace(1e-1, 1e-3, 5)),
        ]
    )


def _run_drift_check(config: RunConfig) -> RunOutcome:
    model = config.build_model()
    if model.profile is None or model.reduced is None:
        raise ConfigurationError(f"drift-check needs a fluctuation-dissipation model, {model.name} is not one")
    points = drift_check_points(model, seed=config.seed)
    pipeline = noise_induced_drift(model, points)
    s = model.reduced.value(points)
    analytic = model.profile.D_prime(s)[:, None] * model.reduced.gradient(points)
    error = np.abs(pipeline - analytic).max(axis=-1)
    max_error = float(error.max())

    n = model.dim_n
    if config.output_format == OutputFormat.JSON:
        body = dump_json(
            {
                "config": config.as_dict(),
                "max_abs_error": max_error,
                "points": points.tolist(),
                "S_pipeline": pipeline.tolist(),
                "S_analytic": analytic.tolist(),
            }
        )
    else:
        axes = range(1, n + 1)
        header = [f"x_{i}" for i in axes] + [f"S_{i}" for i in axes] + [f"S_exact_{i}" for i in axes] + ["abs_err"]
        lines = [",".join(header)]
        for x, sp, sa, err in zip(points, pipeline, analytic, error, strict=True):
            lines.append(",".join(repr(float(v)) for v in (*x, *sp, *sa, err)))
        body = header_lines(config.as_dict()) + "\n".join(lines) + "\n"
    path = atomic_write_text(config.output_path(), body)
    verdict = "PASS" if max_error <= DRIFT_TOLERANCE else "FAIL"
    return RunOutcome(status=0, summary=f"{verdict} max_abs_error={max_error:.3e} -> {path}", artifacts=(path,))


_DISPATCH = {
    CommandName.SIMULATE: _run_simulate,
    CommandName.CONVERGE: _run_experiment,
    CommandName.EXIT_TIMES: _run_experiment,
    CommandName.LYAPUNOV_CHECK: _run_lyapunov_check,
    CommandName.DRIFT_CHECK: _run_drift_check,
}


def run(config: RunConfig) -> RunOutcome:
    """Dispatches a validated config; library errors become exit status 1 (config) or 2 (numerical)"""
    logger.info(f"run: {config.command.value} model={config.model_name} seed={config.seed}")
    try:
        outcome = _DISPATCH[config.command](config)
    except KramersError as e:
        logger.error(f"{config.command.value} failed: [{e.__class__.__name__}] {e}")
        return RunOutcome(status=e.exit_code, summary=f"{e.__class__.__name__}: {e}")
    logger.info(outcome.summary)
    return outcome
