"""
Sampling evidence for the non-explosivity conditions of the limiting diffusion.

p1: V grows without bound on the complements X \\ X_k of the shells
    X_k = {x in X: distance(x, dX) > 1/k and |x| < k}.
p2: LV <= C V + D on X for some constants C, D.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from collections.abc import Callable, Sequence

import numpy as np

from core.exc import ConfigurationError, SamplingFailureError
from core.integrators import NoiseBlocks, NoiseStream, step_overdamped_batch, time_steps
from core.lyapunov import as_point_batch, unbatch
from core.models import DomainSpec, Model, limiting_diffusion, limiting_drift

__all__ = [
    "LyapunovCandidate",
    "ShellFamily",
    "P1Row",
    "P2Fit",
    "LyapunovReport",
    "apply_generator",
    "verify_p1",
    "verify_p2",
    "p2_grid",
    "generator_estimate",
    "check_model_lyapunov",
    "DEFAULT_SHELLS",
    "DEFAULT_C_VALUES",
]

logger = logging.getLogger(__name__)

DEFAULT_SHELLS = tuple(2**i for i in range(1, 11))
DEFAULT_C_VALUES = (0.0,) + tuple(float(2**i) for i in range(0, 11))

Array = np.ndarray


@dataclasses.dataclass(frozen=True)
class LyapunovCandidate:
    V: Callable[[Array], Array]
    grad_V: Callable[[Array], Array]
    hess_V: Callable[[Array], Array]

    @classmethod
    def from_model(cls, model: Model) -> LyapunovCandidate:
        if model.lyapunov_fn is None:
            raise ConfigurationError(f"Model {model.name} has no Lyapunov function")
        return cls(*model.lyapunov_fn)

    def consistency_error(self, xs: Array) -> float:
        """Largest relative mismatch of grad V and hess V against central differences of V and grad V"""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        rows, n = xs.shape
        h = 1e-5 * (1.0 + np.linalg.norm(xs, axis=-1))
        grad = self.grad_V(xs)
        hess = self.hess_V(xs)
        fd_grad = np.empty_like(grad)
        fd_hess = np.empty_like(hess)
        for l in range(n):
            shift = np.zeros_like(xs)
            shift[:, l] = h
            fd_grad[:, l] = (self.V(xs + shift) - self.V(xs - shift)) / (2.0 * h)
            fd_hess[:, :, l] = (self.grad_V(xs + shift) - self.grad_V(xs - shift)) / (2.0 * h[:, None])
        grad_err = np.abs(fd_grad - grad) / (1.0 + np.abs(grad))
        hess_err = np.abs(fd_hess - hess) / (1.0 + np.abs(hess))
        return float(max(grad_err.max(initial=0.0), hess_err.max(initial=0.0)))

    def is_consistent(self, xs: Array, rel_tol: float = 1e-4) -> bool:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        return bool(np.all(self.V(xs) >= 0.0)) and self.consistency_error(xs) <= rel_tol


@dataclasses.dataclass(frozen=True)
class ShellFamily:
    domain: DomainSpec
    ks: tuple[int, ...] = DEFAULT_SHELLS

    def __post_init__(self):
        if not self.ks or any(k < 1 for k in self.ks):
            raise ConfigurationError("Shell range must be a nonempty list of positive integers")

    def outside(self, xs: Array, k: int) -> Array:
        """Membership in X minus X_k"""
        distance = self.domain.boundary_distance(xs)
        inside = self.domain.contains(xs)
        return inside & ((distance <= 1.0 / k) | (np.linalg.norm(xs, axis=-1) >= k))

    def sample_pool(self, samples: int = 2000, seed: int = 0) -> Array:
        k_max = max(self.ks)
        rng = np.random.default_rng(seed)
        return np.concatenate(
            [
                self.domain.sample_interior(rng, samples),
                self.domain.near_boundary(np.geomspace(0.5, 1e-2 / k_max, 48)),
                self.domain.far_field(np.geomspace(1.0, 4.0 * k_max, 48)),
            ]
        )


@dataclasses.dataclass(frozen=True)
class P1Row:
    k: int
    inf_V: float
    samples: int


@dataclasses.dataclass(frozen=True)
class P2Fit:
    C: float
    D: float
    max_violation: float
    passed: bool


@dataclasses.dataclass(frozen=True)
class LyapunovReport:
    p1: list[P1Row]
    p1_pass: bool
    p2: P2Fit

    @property
    def passed(self) -> bool:
        return self.p1_pass and self.p2.passed

    def as_dict(self) -> dict:
        return {
            "p1": [dataclasses.asdict(row) for row in self.p1],
            "p1_pass": self.p1_pass,
            "p2": {"C": self.p2.C, "D": self.p2.D, "max_violation": self.p2.max_violation, "pass": self.p2.passed},
            "pass": self.passed,
        }


def apply_generator(model: Model, cand: LyapunovCandidate, x) -> float | Array:
    """LV = b . grad V + 1/2 tr(G hess V) with b the limiting drift and G = (inv(gamma) sigma)(inv(gamma) sigma)^T"""
    xs, single = as_point_batch(x)
    drift = limiting_drift(model, xs)
    diffusion = limiting_diffusion(model, xs)
    covariance = diffusion @ np.swapaxes(diffusion, -1, -2)
    value = np.einsum("ri,ri->r", drift, cand.grad_V(xs)) + 0.5 * np.einsum("rij,rji->r", covariance, cand.hess_V(xs))
    return float(unbatch(value, single)) if single else value


def verify_p1(cand: LyapunovCandidate, shells: ShellFamily, samples: int = 2000, seed: int = 0) -> tuple[list[P1Row], bool]:
    """Estimates inf V over X minus X_k from one nested sample pool"""
    pool = shells.sample_pool(samples, seed)
    values = cand.V(pool)
    rows = []
    for k in sorted(shells.ks):
        mask = shells.outside(pool, k)
        if not mask.any():
            raise SamplingFailureError(f"No sampleable points outside of shell k={k}")
        rows.append(P1Row(k=int(k), inf_V=float(values[mask].min()), samples=int(mask.sum())))

    estimates = np.array([row.inf_V for row in rows])
    monotone = bool(np.all(np.diff(estimates) >= 0.0))
    passed = monotone and estimates[-1] > 10.0 * estimates[0]
    logger.debug(f"p1: estimates={estimates.tolist()} pass={passed}")
    return rows, passed


def p2_grid(domain: DomainSpec, samples: int = 1000, seed: int = 0) -> list[Array]:
    """Nested levels: the interior core first, then near-boundary and far-field levels"""
    rng = np.random.default_rng(seed)
    core = np.concatenate(
        [
            domain.sample_interior(rng, samples),
            domain.near_boundary(np.geomspace(1e-1, 1e-2, 5)),
            domain.far_field(np.geomspace(1.0, 10.0, 5)),
        ]
    )
    levels = [core, domain.near_boundary(np.geomspace(1e-2, 1e-4, 9)), domain.far_field(np.geomspace(10.0, 1e3, 9))]
    return [level for level in levels if level.shape[0] > 0]


def verify_p2(
    model: Model,
    cand: LyapunovCandidate,
    grid: Sequence[Array] | None = None,
    C_values: Sequence[float] = DEFAULT_C_VALUES,
) -> P2Fit:
    """Fits D on the core level for each C and measures LV - C V - D on the whole grid"""
    levels = p2_grid(model.domain) if grid is None else [np.atleast_2d(level) for level in grid]
    core_size = levels[0].shape[0]
    points = np.concatenate(levels)
    with np.errstate(over="ignore"):
        lv = apply_generator(model, cand, points)
        v = cand.V(points)

    best = None
    for C in sorted(C_values):
        with np.errstate(over="ignore", invalid="ignore"):
            residual = lv - C * v
        D = float(np.max(residual[:core_size]))
        violation = float(np.max(residual - D))
        passed = math.isfinite(violation) and violation <= 1e-9 * (1.0 + abs(D))
        fit = P2Fit(C=float(C), D=D, max_violation=max(violation, 0.0), passed=passed)
        if passed:
            logger.debug(f"p2: pass with C={C} D={D:.6g}")
            return fit
        if best is None or violation < best.max_violation:
            best = fit
    logger.debug(f"p2: fail, smallest violation {best.max_violation:.6g} at C={best.C}")
    return best


def check_model_lyapunov(
    model: Model, shells: Sequence[int] = DEFAULT_SHELLS, samples: int = 2000, seed: int = 0
) -> LyapunovReport:
    cand = LyapunovCandidate.from_model(model)
    rows, p1_pass = verify_p1(cand, ShellFamily(model.domain, tuple(shells)), samples=samples, seed=seed)
    p2 = verify_p2(model, cand, p2_grid(model.domain, seed=seed))
    report = LyapunovReport(p1=rows, p1_pass=p1_pass, p2=p2)
    logger.info(f"lyapunov check: model={model.name} p1={'PASS' if p1_pass else 'FAIL'} p2={'PASS' if p2.passed else 'FAIL'}")
    return report


def generator_estimate(
    model: Model,
    cand: LyapunovCandidate,
    x0,
    t: float,
    n_paths: int = 10000,
    substeps: int = 10,
    master_seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo (E[V(x(t))] - V(x0)) / t under the limiting equation, with its standard error"""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if not (t > 0 and n_paths >= 2 and substeps >= 1):
        raise ConfigurationError("generator_estimate needs t > 0, n_paths >= 2 and substeps >= 1")
    dt = t / substeps
    streams = [NoiseStream(master_seed, i, model.dim_k, dt) for i in range(n_paths)]
    n_steps = time_steps(t, dt)
    noise = NoiseBlocks(streams, n_steps)
    xs = np.tile(x0, (n_paths, 1))
    alive = np.ones(n_paths, dtype=bool)
    for _ in range(n_steps):
        x_new = step_overdamped_batch(model, np.where(alive[:, None], xs, x0), dt, noise.next())
        alive &= model.domain.contains(x_new)
        xs = np.where(alive[:, None], x_new, xs)
    if alive.sum() < 2:
        raise SamplingFailureError("Too few surviving paths for the generator estimate")
    if not alive.all():
        logger.warning(f"generator estimate: {int((~alive).sum())} paths left the domain and are excluded")
    increments = (cand.V(xs[alive]) - cand.V(x0[None])[0]) / t
    return float(increments.mean()), float(increments.std(ddof=1) / math.sqrt(increments.size))
