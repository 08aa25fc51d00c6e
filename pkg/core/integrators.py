"""
Coupled time stepping of the underdamped system and its small-mass limit.

Both integrations run on the same uniform grid and consume the same Brownian increments. A process
that leaves the domain is sent to the cemetery state and stays there; a non-finite sample aborts the
path instead. The batch kernels work on ``(R, n)`` rows and are shared by the single-path API and the
Monte Carlo engine.
"""

from __future__ import annotations

import dataclasses
import io
import logging
import math
import warnings
from collections.abc import Sequence

import numpy as np
from django.conf import settings

from core.exc import ConfigurationError, NonFiniteStateError, ParameterDomainError, ResolutionWarning
from core.lyapunov import default_fd_step, expm, lyapunov_batch
from core.models import Model, limiting_coefficients_batch

__all__ = [
    "Cemetery",
    "CEMETERY",
    "InDomain",
    "ExtendedState",
    "NoiseStream",
    "NoiseBlocks",
    "TrajectoryPair",
    "LadderResult",
    "d_infinity",
    "time_steps",
    "step_underdamped",
    "step_overdamped",
    "step_underdamped_batch",
    "step_overdamped_batch",
    "integrate_mass_ladder",
    "simulate_coupled",
]

logger = logging.getLogger(__name__)


# states
class Cemetery:
    """Absorbing point outside of X"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "CEMETERY"


CEMETERY = Cemetery()


@dataclasses.dataclass(frozen=True, eq=False)
class InDomain:
    x: np.ndarray
    v: np.ndarray | None = None


ExtendedState = InDomain | Cemetery


def _position(p) -> np.ndarray | None:
    if p is None or isinstance(p, Cemetery):
        return None
    if isinstance(p, InDomain):
        return np.asarray(p.x, dtype=float)
    return np.asarray(p, dtype=float)


def d_infinity(p, q) -> float:
    """Euclidean distance, infinite as soon as either argument is the cemetery"""
    a, b = _position(p), _position(q)
    if a is None or b is None:
        return math.inf
    return float(np.linalg.norm(a - b))


def time_steps(T: float, dt: float) -> int:
    """Steps covering [0, T]; the horizon must be a whole number of steps"""
    ratio = T / dt
    steps = round(ratio)
    if abs(ratio - steps) > 1e-9 * max(1.0, ratio):
        raise ParameterDomainError(f"T={T} is not a whole number of steps dt={dt}")
    return int(steps)


# noise
class NoiseStream:
    """Brownian increments of one path, a pure function of (master_seed, path_index)"""

    def __init__(self, master_seed: int, path_index: int, k: int, dt: float, block: int | None = None):
        self.master_seed = int(master_seed)
        self.path_index = int(path_index)
        self.k = int(k)
        self.dt = float(dt)
        self.block = int(block or settings.KRAMERS_NOISE_BLOCK)
        self._rng = np.random.default_rng(np.random.SeedSequence(entropy=self.master_seed, spawn_key=(self.path_index,)))
        self._sqrt_dt = math.sqrt(self.dt)

    def draw(self, count: int) -> np.ndarray:
        """Next ``count`` increments, shape (count, k)"""
        return self._rng.standard_normal((count, self.k)) * self._sqrt_dt

    def __iter__(self):
        while True:
            yield from self.draw(self.block)


class NoiseBlocks:
    # lockstep buffer over several streams, consumed row by row
    def __init__(self, streams: Sequence[NoiseStream], total: int):
        self.streams = streams
        self.remaining = total
        self.buffer = None
        self.cursor = 0

    def next(self) -> np.ndarray:
        if self.buffer is None or self.cursor == self.buffer.shape[1]:
            count = min(self.streams[0].block, self.remaining)
            self.buffer = np.stack([s.draw(count) for s in self.streams])
            self.remaining -= count
            self.cursor = 0
        dW = self.buffer[:, self.cursor]
        self.cursor += 1
        return dW


# batch kernels
def _symmetric_sqrt(mats: np.ndarray) -> np.ndarray:
    w, vecs = np.linalg.eigh(0.5 * (mats + np.swapaxes(mats, -1, -2)))
    root = np.sqrt(np.clip(w, 0.0, None))
    return (vecs * root[..., None, :]) @ np.swapaxes(vecs, -1, -2)


def _polar_factor(sigma: np.ndarray) -> np.ndarray:
    # W with W W^T = I_n and sigma = P W, P = (sigma sigma^T)^(1/2)
    u, _, vh = np.linalg.svd(sigma, full_matrices=False)
    return u @ vh


def step_underdamped_batch(model: Model, x: np.ndarray, v: np.ndarray, m: np.ndarray, dt: float, dW: np.ndarray):
    """Frozen-coefficient splitting: exact OU velocity update, then x += v dt"""
    m = np.broadcast_to(np.asarray(m, dtype=float), x.shape[:1])
    force = model.force(x)
    if model.isotropic:
        g, s, _ = model.scalar_coefficients(x)
        decay = np.exp(-g * dt / m)
        variance = s * s / (2.0 * g) * -np.expm1(-2.0 * g * dt / m) / m
        xi = np.sqrt(variance)[:, None] * dW / math.sqrt(dt)
        v_new = decay[:, None] * v + ((1.0 - decay) / g)[:, None] * force + xi
        return x + v_new * dt, v_new

    gamma = model.friction(x)
    sigma = model.diffusion(x)
    e = expm(-gamma * (dt / m)[:, None, None])
    j = lyapunov_batch(gamma, sigma @ np.swapaxes(sigma, -1, -2))
    cov = (j - e @ j @ np.swapaxes(e, -1, -2)) / m[:, None, None]
    noise_map = _symmetric_sqrt(cov) @ _polar_factor(sigma)
    xi = np.einsum("rik,rk->ri", noise_map, dW) / math.sqrt(dt)
    drift = np.linalg.solve(gamma, force[..., None])[..., 0]
    v_new = np.einsum("rij,rj->ri", e, v) + drift - np.einsum("rij,rj->ri", e, drift) + xi
    return x + v_new * dt, v_new


def step_overdamped_batch(model: Model, x: np.ndarray, dt: float, dW: np.ndarray) -> np.ndarray:
    """Euler-Maruyama step of the limiting equation"""
    h = None
    if model.analytic_friction_grad is None:
        # finite-difference step never reaches past the boundary
        h = np.minimum(default_fd_step(x), 0.5 * model.domain.boundary_distance(x))
    drift, diffusion = limiting_coefficients_batch(model, x, h)
    return x + drift * dt + np.einsum("rik,rk->ri", diffusion, dW)


# single-step API
def _require_step(m: float | None, dt: float):
    if not (math.isfinite(dt) and dt > 0):
        raise ParameterDomainError(f"dt must be positive, got {dt}")
    if m is not None and not (math.isfinite(m) and m > 0):
        raise ParameterDomainError(f"Mass must be positive, got {m}")


def step_underdamped(model: Model, state: ExtendedState, m: float, dt: float, dW) -> ExtendedState:
    if isinstance(state, Cemetery):
        return CEMETERY
    _require_step(m, dt)
    x = np.asarray(state.x, dtype=float).reshape(1, model.dim_n)
    v = np.zeros_like(x) if state.v is None else np.asarray(state.v, dtype=float).reshape(1, model.dim_n)
    dW = np.asarray(dW, dtype=float).reshape(1, model.dim_k)
    x_new, v_new = step_underdamped_batch(model, x, v, np.array([m]), dt, dW)
    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(v_new))):
        raise NonFiniteStateError(f"Underdamped step produced a non-finite state from x={x[0]}, v={v[0]}")
    if not model.domain.contains(x_new)[0]:
        return CEMETERY
    return InDomain(x=x_new[0], v=v_new[0])


def step_overdamped(model: Model, x, dt: float, dW) -> ExtendedState:
    if isinstance(x, Cemetery):
        return CEMETERY
    _require_step(None, dt)
    xs = _position(x).reshape(1, model.dim_n)
    dW = np.asarray(dW, dtype=float).reshape(1, model.dim_k)
    x_new = step_overdamped_batch(model, xs, dt, dW)
    if not np.all(np.isfinite(x_new)):
        raise NonFiniteStateError(f"Overdamped step produced a non-finite state from x={xs[0]}")
    if not model.domain.contains(x_new)[0]:
        return CEMETERY
    return InDomain(x=x_new[0])


# coupled integration
@dataclasses.dataclass
class LadderResult:
    masses: np.ndarray
    path_indices: np.ndarray
    # (M, P); inf once either process reached the cemetery
    sup_distance: np.ndarray
    # (M, P) and (P,); nan when the process never exited
    exit_time_m: np.ndarray
    exit_time_limit: np.ndarray
    aborted: np.ndarray
    limit_aborted: np.ndarray
    trace: dict | None = None


def _validate_run(model: Model, x0: np.ndarray, v0: np.ndarray, masses: np.ndarray, T: float, dt: float):
    if not model.isotropic and model.dim_k < model.dim_n:
        raise ConfigurationError(f"Underdamped noise map needs k >= n, got k={model.dim_k}, n={model.dim_n}")
    if x0.shape != (model.dim_n,) or v0.shape != (model.dim_n,):
        raise ParameterDomainError(f"x0 and v0 must have {model.dim_n} components")
    if not model.domain.contains(x0[None])[0]:
        raise ParameterDomainError(f"Initial position {x0.tolist()} is outside of the model domain")
    if not np.all(np.isfinite(v0)):
        raise ParameterDomainError("Initial velocity must be finite")
    if masses.size == 0 or not np.all(np.isfinite(masses)) or np.any(masses <= 0):
        raise ParameterDomainError("Masses must be positive")
    if not (math.isfinite(T) and T >= 0):
        raise ParameterDomainError(f"T must be nonnegative, got {T}")
    _require_step(None, dt)


def _warn_resolution(model: Model, x0: np.ndarray, m_min: float, dt: float):
    stiffness = float(np.linalg.norm(model.friction(x0[None])[0], ord=2)) * dt / m_min
    if stiffness > 1.0:
        warnings.warn(
            f"dt * |gamma(x0)| / m = {stiffness:.3g} > 1: velocity relaxation is not resolved by the time step",
            ResolutionWarning,
            stacklevel=3,
        )


def integrate_mass_ladder(
    model: Model,
    x0,
    v0=None,
    masses: Sequence[float] = (1.0,),
    T: float = 1.0,
    dt: float = 1e-3,
    master_seed: int = 0,
    path_indices: Sequence[int] = (0,),
    noise_block: int | None = None,
    record: bool = False,
) -> LadderResult:
    """Integrates every (mass, path) pair and the shared limit path of every path index together"""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    v0 = np.zeros_like(x0) if v0 is None else np.asarray(v0, dtype=float).reshape(-1)
    masses = np.asarray(masses, dtype=float).reshape(-1)
    path_indices = np.asarray(path_indices, dtype=np.int64).reshape(-1)
    _validate_run(model, x0, v0, masses, T, dt)
    _warn_resolution(model, x0, float(masses.min()), dt)

    n_masses, n_paths, n = masses.size, path_indices.size, model.dim_n
    n_steps = time_steps(T, dt)
    rows = n_masses * n_paths
    mass_rows = np.repeat(masses, n_paths)

    x_m = np.tile(x0, (rows, 1))
    v_m = np.tile(v0, (rows, 1))
    x_l = np.tile(x0, (n_paths, 1))
    alive_m = np.ones(rows, dtype=bool)
    alive_l = np.ones(n_paths, dtype=bool)
    aborted_m = np.zeros(rows, dtype=bool)
    aborted_l = np.zeros(n_paths, dtype=bool)
    exit_m = np.full(rows, np.nan)
    exit_l = np.full(n_paths, np.nan)
    sup = np.zeros(rows)

    trace = None
    if record:
        trace = {
            "x_m": [x_m.copy()],
            "v_m": [v_m.copy()],
            "x_l": [x_l.copy()],
            "alive_m": [alive_m.copy()],
            "alive_l": [alive_l.copy()],
        }

    streams = [NoiseStream(master_seed, int(i), model.dim_k, dt, noise_block) for i in path_indices]
    noise = NoiseBlocks(streams, n_steps)

    with np.errstate(all="ignore"):
        for step in range(1, n_steps + 1):
            t = step * dt
            dW = noise.next()

            if alive_l.any():
                x_new = step_overdamped_batch(model, np.where(alive_l[:, None], x_l, x0), dt, dW)
                bad = alive_l & ~np.all(np.isfinite(x_new), axis=-1)
                exited = alive_l & ~bad & ~model.domain.contains(x_new)
                aborted_l |= bad
                exit_l[exited] = t
                alive_l = alive_l & ~bad & ~exited
                x_l = np.where(alive_l[:, None], x_new, x_l)

            if alive_m.any():
                safe = alive_m[:, None]
                xs, vs = step_underdamped_batch(
                    model, np.where(safe, x_m, x0), np.where(safe, v_m, v0), mass_rows, dt, np.tile(dW, (n_masses, 1))
                )
                bad = alive_m & ~(np.all(np.isfinite(xs), axis=-1) & np.all(np.isfinite(vs), axis=-1))
                exited = alive_m & ~bad & ~model.domain.contains(xs)
                aborted_m |= bad
                exit_m[exited] = t
                alive_m = alive_m & ~bad & ~exited
                x_m = np.where(alive_m[:, None], xs, x_m)
                v_m = np.where(alive_m[:, None], vs, v_m)

            both = alive_m & np.tile(alive_l, n_masses)
            distance = np.where(both, np.linalg.norm(x_m - np.tile(x_l, (n_masses, 1)), axis=-1), np.inf)
            sup = np.maximum(sup, distance)

            if trace is not None:
                trace["x_m"].append(x_m.copy())
                trace["v_m"].append(v_m.copy())
                trace["x_l"].append(x_l.copy())
                trace["alive_m"].append(alive_m.copy())
                trace["alive_l"].append(alive_l.copy())

            if not alive_m.any() and not alive_l.any() and trace is None:
                break

    aborted_m |= np.tile(aborted_l, n_masses)
    if aborted_m.any():
        logger.debug(f"aborted paths: {int(aborted_m.sum())} of {rows} rows, limit {int(aborted_l.sum())}")

    if trace is not None:
        trace = {key: np.stack(value) for key, value in trace.items()}
    return LadderResult(
        masses=masses,
        path_indices=path_indices,
        sup_distance=sup.reshape(n_masses, n_paths),
        exit_time_m=exit_m.reshape(n_masses, n_paths),
        exit_time_limit=exit_l,
        aborted=aborted_m.reshape(n_masses, n_paths),
        limit_aborted=aborted_l,
        trace=trace,
    )


@dataclasses.dataclass
class TrajectoryPair:
    times: np.ndarray
    # samples are nan after the cemetery, the alive flags tell the two apart
    x_m: np.ndarray
    v_m: np.ndarray
    x_limit: np.ndarray
    alive_m: np.ndarray
    alive_limit: np.ndarray
    sup_distance: float
    exit_time_m: float | None
    exit_time_limit: float | None
    aborted: bool = False

    def state_m(self, index: int) -> ExtendedState:
        if not self.alive_m[index]:
            return CEMETERY
        return InDomain(x=self.x_m[index], v=self.v_m[index])

    def state_limit(self, index: int) -> ExtendedState:
        if not self.alive_limit[index]:
            return CEMETERY
        return InDomain(x=self.x_limit[index])

    def to_csv(self, stride: int = 1) -> str:
        """t,x_1..x_n,v_1..v_n,x_lim_1..x_lim_n,exited_m,exited_lim; cemetery rows have empty fields"""
        n = self.x_m.shape[-1]
        header = (
            ["t"] + [f"x_{i}" for i in range(1, n + 1)] + [f"v_{i}" for i in range(1, n + 1)]
            + [f"x_lim_{i}" for i in range(1, n + 1)] + ["exited_m", "exited_lim"]
        )
        out = io.StringIO()
        out.write(",".join(header) + "\n")
        for i in range(0, self.times.size, max(1, int(stride))):
            fields = [repr(float(self.times[i]))]
            if self.alive_m[i]:
                fields += [repr(float(v)) for v in self.x_m[i]] + [repr(float(v)) for v in self.v_m[i]]
            else:
                fields += [""] * (2 * n)
            fields += [repr(float(v)) for v in self.x_limit[i]] if self.alive_limit[i] else [""] * n
            fields += ["0" if self.alive_m[i] else "1", "0" if self.alive_limit[i] else "1"]
            out.write(",".join(fields) + "\n")
        return out.getvalue()


def simulate_coupled(
    model: Model,
    x0,
    v0=None,
    m: float = 1e-2,
    T: float = 1.0,
    dt: float = 1e-4,
    master_seed: int = 0,
    path_index: int = 0,
) -> TrajectoryPair:
    result = integrate_mass_ladder(
        model, x0, v0, masses=[m], T=T, dt=dt, master_seed=master_seed, path_indices=[path_index], record=True
    )
    trace = result.trace
    alive_m = trace["alive_m"][:, 0]
    alive_l = trace["alive_l"][:, 0]
    x_m = np.where(alive_m[:, None], trace["x_m"][:, 0], np.nan)
    v_m = np.where(alive_m[:, None], trace["v_m"][:, 0], np.nan)
    x_l = np.where(alive_l[:, None], trace["x_l"][:, 0], np.nan)
    aborted = bool(result.aborted[0, 0])
    if aborted:
        logger.warning(f"path {path_index} aborted: non-finite state for m={m}")

    exit_m, exit_l = result.exit_time_m[0, 0], result.exit_time_limit[0]
    return TrajectoryPair(
        times=np.arange(alive_m.size) * dt,
        x_m=x_m,
        v_m=v_m,
        x_limit=x_l,
        alive_m=alive_m,
        alive_limit=alive_l,
        sup_distance=math.nan if aborted else float(result.sup_distance[0, 0]),
        exit_time_m=None if np.isnan(exit_m) else float(exit_m),
        exit_time_limit=None if np.isnan(exit_l) else float(exit_l),
        aborted=aborted,
    )
