"""
Coupled Monte Carlo estimates over a descending mass ladder.

Paths are split in fixed-size chunks of consecutive path indices; every chunk integrates the whole
mass ladder against one shared limit path per index. Chunk results are reduced by summing counts in
chunk order, so tables do not depend on the number of worker threads.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import io
import logging
import math
import os
from collections.abc import Sequence

import numpy as np
from django.conf import settings
from scipy import stats

from core.constants import WILSON_Z95
from core.exc import ConfigurationError, DomainError, ParameterDomainError, QuarantineExceededError
from core.integrators import integrate_mass_ladder, time_steps
from core.models import Model, build_model, model_document
from core.utils import dump_json, header_lines

__all__ = [
    "ExperimentPlan",
    "ExperimentCounts",
    "ConvergenceRow",
    "ConvergenceTable",
    "ExitRow",
    "ExitTable",
    "wilson_interval",
    "resolve_threads",
    "run_experiment",
    "estimate_exceedance",
    "estimate_exit_probability",
]

logger = logging.getLogger(__name__)


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval of a binomial proportion"""
    if isinstance(successes, bool) or isinstance(n, bool):
        raise DomainError("successes and n must be integers")
    if int(successes) != successes or int(n) != n:
        raise DomainError(f"successes and n must be integers, got {successes}, {n}")
    successes, n = int(successes), int(n)
    if n < 1 or not 0 <= successes <= n:
        raise DomainError(f"Wilson interval needs 0 <= successes <= n and n >= 1, got {successes}, {n}")
    if not 0.0 < confidence < 1.0:
        raise DomainError(f"Confidence must lie in (0, 1), got {confidence}")

    z = WILSON_Z95 if confidence == 0.95 else float(stats.norm.ppf(0.5 + 0.5 * confidence))
    p = successes / n
    z2 = z * z
    denominator = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denominator
    half = z / denominator * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n))
    low = 0.0 if successes == 0 else max(0.0, min(p, center - half))
    high = 1.0 if successes == n else min(1.0, max(p, center + half))
    return low, high


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = settings.KRAMERS_THREADS
    if threads < 0:
        raise ConfigurationError(f"threads must be >= 0, got {threads}")
    return threads or os.cpu_count() or 1


# plan
@dataclasses.dataclass(frozen=True)
class ExperimentPlan:
    model_name: str
    params: dict = dataclasses.field(default_factory=dict)
    x0: tuple[float, ...] | None = None
    v0: tuple[float, ...] | None = None
    T: float = 1.0
    dt: float = 1e-5
    epsilon: tuple[float, ...] = (0.05,)
    masses: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4)
    n_paths: int = 400
    master_seed: int = 0

    def validate(self) -> None:
        masses = np.asarray(self.masses, dtype=float)
        if masses.size == 0 or not np.all(np.isfinite(masses)) or np.any(masses <= 0):
            raise ParameterDomainError(f"Masses must be positive, got {list(self.masses)}")
        if np.any(np.diff(masses) >= 0):
            raise ParameterDomainError(f"Masses must be strictly decreasing, got {list(self.masses)}")
        if not self.epsilon or any(not (math.isfinite(e) and e > 0) for e in self.epsilon):
            raise ParameterDomainError(f"Thresholds must be positive, got {list(self.epsilon)}")
        if len(set(self.epsilon)) != len(self.epsilon):
            raise ParameterDomainError("Thresholds must be unique")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ParameterDomainError(f"dt must be positive, got {self.dt}")
        if not (math.isfinite(self.T) and self.T >= 0):
            raise ParameterDomainError(f"T must be nonnegative, got {self.T}")
        # T = 0 is the empty time interval
        if 0 < self.T < self.dt:
            raise ParameterDomainError(f"dt={self.dt} exceeds T={self.T}")
        time_steps(self.T, self.dt)
        if isinstance(self.n_paths, bool) or int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ParameterDomainError(f"n_paths must be a positive integer, got {self.n_paths}")
        if int(self.master_seed) != self.master_seed or self.master_seed < 0:
            raise ParameterDomainError(f"Seed must be a nonnegative integer, got {self.master_seed}")

    def build_model(self) -> Model:
        return build_model(self.model_name, self.params)

    def as_dict(self) -> dict:
        return {
            "model": self.model_name,
            "params": dict(self.params),
            "x0": None if self.x0 is None else list(self.x0),
            "v0": None if self.v0 is None else list(self.v0),
            "T": self.T,
            "dt": self.dt,
            "epsilon": list(self.epsilon),
            "masses": list(self.masses),
            "n_paths": self.n_paths,
            "seed": self.master_seed,
        }


# counts
@dataclasses.dataclass
class ExperimentCounts:
    masses: np.ndarray
    epsilons: np.ndarray
    n_paths: int
    # (M, E)
    exceed: np.ndarray
    # (M,)
    exits: np.ndarray
    aborted: np.ndarray
    limit_exits: int

    @classmethod
    def empty(cls, masses: Sequence[float], epsilons: Sequence[float], n_paths: int) -> ExperimentCounts:
        m, e = len(masses), len(epsilons)
        return cls(
            masses=np.asarray(masses, dtype=float),
            epsilons=np.asarray(epsilons, dtype=float),
            n_paths=n_paths,
            exceed=np.zeros((m, e), dtype=np.int64),
            exits=np.zeros(m, dtype=np.int64),
            aborted=np.zeros(m, dtype=np.int64),
            limit_exits=0,
        )

    @property
    def valid(self) -> np.ndarray:
        return self.n_paths - self.aborted

    def add(self, other: ExperimentCounts) -> None:
        self.exceed += other.exceed
        self.exits += other.exits
        self.aborted += other.aborted
        self.limit_exits += other.limit_exits


def _chunk_counts(model: Model, plan: ExperimentPlan, x0: np.ndarray, v0: np.ndarray | None, indices: range) -> ExperimentCounts:
    result = integrate_mass_ladder(
        model, x0, v0, masses=plan.masses, T=plan.T, dt=plan.dt, master_seed=plan.master_seed, path_indices=list(indices)
    )
    valid = ~result.aborted
    epsilons = np.asarray(plan.epsilon, dtype=float)
    exceed = (result.sup_distance[:, :, None] > epsilons[None, None, :]) & valid[:, :, None]
    exited = ~np.isnan(result.exit_time_m) & valid
    limit_exited = ~np.isnan(result.exit_time_limit) & ~result.limit_aborted

    counts = ExperimentCounts.empty(plan.masses, plan.epsilon, len(indices))
    counts.exceed = exceed.sum(axis=1).astype(np.int64)
    counts.exits = exited.sum(axis=1).astype(np.int64)
    counts.aborted = result.aborted.sum(axis=1).astype(np.int64)
    counts.limit_exits = int(limit_exited.sum())
    logger.debug(f"chunk {indices.start}..{indices.stop - 1}: exceed={counts.exceed.tolist()} aborted={counts.aborted.tolist()}")
    return counts


def run_experiment(
    plan: ExperimentPlan,
    model: Model | None = None,
    threads: int | None = None,
    chunk_size: int | None = None,
    quarantine_fraction: float | None = None,
) -> ExperimentCounts:
    plan.validate()
    model = model or plan.build_model()
    threads = resolve_threads(threads)
    chunk_size = int(chunk_size or settings.KRAMERS_PATH_CHUNK)
    if quarantine_fraction is None:
        quarantine_fraction = settings.KRAMERS_QUARANTINE_FRACTION

    x0 = model.x0 if plan.x0 is None else np.asarray(plan.x0, dtype=float)
    v0 = None if plan.v0 is None else np.asarray(plan.v0, dtype=float)
    chunks = [range(start, min(start + chunk_size, plan.n_paths)) for start in range(0, plan.n_paths, chunk_size)]
    logger.info(
        f"experiment: model={model.name} masses={list(plan.masses)} eps={list(plan.epsilon)} T={plan.T} dt={plan.dt} "
        f"paths={plan.n_paths} seed={plan.master_seed} chunks={len(chunks)} threads={threads}"
    )

    totals = ExperimentCounts.empty(plan.masses, plan.epsilon, plan.n_paths)
    if threads == 1 or len(chunks) == 1:
        for indices in chunks:
            totals.add(_chunk_counts(model, plan, x0, v0, indices))
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
            for counts in executor.map(lambda indices: _chunk_counts(model, plan, x0, v0, indices), chunks):
                totals.add(counts)

    if totals.aborted.any():
        logger.warning(f"aborted paths per mass: {dict(zip(plan.masses, totals.aborted.tolist(), strict=True))}")
    fraction = float(totals.aborted.max()) / plan.n_paths
    if fraction > quarantine_fraction:
        table = ConvergenceTable.from_counts(plan, totals, model)
        raise QuarantineExceededError(
            f"Aborted path fraction {fraction:.3g} exceeds quarantine threshold {quarantine_fraction}", table=table
        )
    return totals


def _interval(successes: int, n: int) -> tuple[float, float, float]:
    if n < 1:
        return math.nan, math.nan, math.nan
    low, high = wilson_interval(successes, n)
    return successes / n, low, high


def _fmt(value: float) -> str:
    return repr(float(value))


# tables
@dataclasses.dataclass(frozen=True)
class ConvergenceRow:
    m: float
    epsilon: float
    p_exceed: float
    ci_low: float
    ci_high: float
    p_exit: float
    aborted: int
    limit_exits: int
    n: int


@dataclasses.dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow]
    config: dict

    CSV_COLUMNS = ("m", "epsilon", "p_exceed", "ci_low", "ci_high", "p_exit", "aborted")

    @classmethod
    def from_counts(cls, plan: ExperimentPlan, counts: ExperimentCounts, model: Model | None = None) -> ConvergenceTable:
        rows = []
        for i, m in enumerate(plan.masses):
            n = int(counts.valid[i])
            p_exit = counts.exits[i] / n if n else math.nan
            for j, eps in enumerate(plan.epsilon):
                p, low, high = _interval(int(counts.exceed[i, j]), n)
                rows.append(
                    ConvergenceRow(
                        m=float(m),
                        epsilon=float(eps),
                        p_exceed=p,
                        ci_low=low,
                        ci_high=high,
                        p_exit=p_exit,
                        aborted=int(counts.aborted[i]),
                        limit_exits=int(counts.limit_exits),
                        n=n,
                    )
                )
        config = plan.as_dict()
        if model is not None:
            config["domain"] = model_document(model)["domain"]
        return cls(rows=rows, config=config)

    def for_epsilon(self, epsilon: float) -> list[ConvergenceRow]:
        return [row for row in self.rows if row.epsilon == epsilon]

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(header_lines(self.config))
        out.write(",".join(self.CSV_COLUMNS) + "\n")
        for row in self.rows:
            values = [row.m, row.epsilon, row.p_exceed, row.ci_low, row.ci_high, row.p_exit]
            out.write(",".join([*map(_fmt, values), str(row.aborted)]) + "\n")
        return out.getvalue()

    def to_json(self) -> str:
        return dump_json({"config": self.config, "rows": [dataclasses.asdict(row) for row in self.rows]})

    def to_gnuplot(self) -> str:
        """One block per threshold, separated by two blank lines for gnuplot's ``index``"""
        out = io.StringIO()
        out.write(header_lines(self.config))
        out.write("# set logscale x; plot for [i=0:*] 'file' index i using 1:2:3:4 with yerrorlines\n")
        for eps in dict.fromkeys(row.epsilon for row in self.rows):
            out.write(f"# epsilon = {_fmt(eps)}\n# m p_exceed ci_low ci_high\n")
            for row in self.for_epsilon(eps):
                out.write(f"{_fmt(row.m)} {_fmt(row.p_exceed)} {_fmt(row.ci_low)} {_fmt(row.ci_high)}\n")
            out.write("\n\n")
        return out.getvalue()


@dataclasses.dataclass(frozen=True)
class ExitRow:
    m: float
    p_exit: float
    ci_low: float
    ci_high: float
    aborted: int
    n: int


@dataclasses.dataclass
class ExitTable:
    rows: list[ExitRow]
    config: dict

    CSV_COLUMNS = ("m", "p_exit", "ci_low", "ci_high", "aborted")

    @classmethod
    def from_counts(cls, plan: ExperimentPlan, counts: ExperimentCounts) -> ExitTable:
        rows = []
        for i, m in enumerate(plan.masses):
            n = int(counts.valid[i])
            p, low, high = _interval(int(counts.exits[i]), n)
            rows.append(ExitRow(m=float(m), p_exit=p, ci_low=low, ci_high=high, aborted=int(counts.aborted[i]), n=n))
        return cls(rows=rows, config=plan.as_dict())

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(header_lines(self.config))
        out.write(",".join(self.CSV_COLUMNS) + "\n")
        for row in self.rows:
            out.write(",".join([_fmt(row.m), _fmt(row.p_exit), _fmt(row.ci_low), _fmt(row.ci_high), str(row.aborted)]) + "\n")
        return out.getvalue()

    def to_json(self) -> str:
        return dump_json({"config": self.config, "rows": [dataclasses.asdict(row) for row in self.rows]})

    def to_gnuplot(self) -> str:
        out = io.StringIO()
        out.write(header_lines(self.config))
        out.write("# m p_exit ci_low ci_high\n")
        for row in self.rows:
            out.write(f"{_fmt(row.m)} {_fmt(row.p_exit)} {_fmt(row.ci_low)} {_fmt(row.ci_high)}\n")
        return out.getvalue()


def estimate_exceedance(
    plan: ExperimentPlan, model: Model | None = None, threads: int | None = None, **kwargs
) -> ConvergenceTable:
    """P{sup_t d(x^m(t), x(t)) > eps} per mass and threshold, paths coupled across the ladder"""
    model = model or plan.build_model()
    counts = run_experiment(plan, model=model, threads=threads, **kwargs)
    table = ConvergenceTable.from_counts(plan, counts, model)
    for row in table.rows:
        logger.info(
            f"m={row.m:g} eps={row.epsilon:g}: p={row.p_exceed:.4f} [{row.ci_low:.4f}, {row.ci_high:.4f}] "
            f"exit={row.p_exit:.4f}"
        )
    return table


def estimate_exit_probability(
    plan: ExperimentPlan, model: Model | None = None, threads: int | None = None, **kwargs
) -> ExitTable:
    """P{tau^m <= T} per mass"""
    counts = run_experiment(plan, model=model, threads=threads, **kwargs)
    table = ExitTable.from_counts(plan, counts)
    for row in table.rows:
        logger.info(f"m={row.m:g}: p_exit={row.p_exit:.4f} [{row.ci_low:.4f}, {row.ci_high:.4f}]")
    return table
