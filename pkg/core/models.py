"""
Coefficient bundles (F, gamma, sigma, domain) of the simulated systems.

All coefficient maps are vectorized over a leading batch axis: positions are ``(R, n)`` arrays,
forces ``(R, n)``, friction ``(R, n, n)``, diffusion ``(R, n, k)`` and the friction derivative
``(R, n, n, n)`` with layout ``[r, i, j, l] = d/dx_l gamma_ij``.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import warnings
from collections.abc import Callable
from pathlib import Path
from typing import Any

import numpy as np

from core.constants import DomainKind, ModelName
from core.exc import (
    ConfigurationError,
    DomainMismatchError,
    FrictionNotPositiveError,
    ParameterDomainError,
    ParameterWarning,
)
from core.lyapunov import (
    as_point_batch,
    unbatch,
    ensure_positive_friction,
    friction_inverse,
    noise_induced_drift,
    noise_induced_drift_batch,
)
from core.transformers import tf_model_name

__all__ = [
    "DomainSpec",
    "IntervalDomain",
    "HalfPlaneOrderDomain",
    "DiskDomain",
    "AllSpaceDomain",
    "DiffusionProfile",
    "ReducedCoordinate",
    "Model",
    "WallGravityPotential",
    "DlvoPotential",
    "PorePotential",
    "from_fluctuation_dissipation",
    "builtin_diffusion_model1",
    "builtin_diffusion_dlvo",
    "builtin_diffusion_pore",
    "wall_gravity_model",
    "dlvo_pair_model",
    "rotational_pore_model",
    "constant_benchmark",
    "noiseless_benchmark",
    "fd_constant_model",
    "explosive_toy",
    "limiting_drift",
    "limiting_diffusion",
    "limiting_coefficients_batch",
    "check_model",
    "build_model",
    "load_model_document",
    "model_document",
    "BUILTIN_MODELS",
]

logger = logging.getLogger(__name__)

Array = np.ndarray
PointMap = Callable[[Array], Array]


# domains
def _finite_rows(xs: Array) -> Array:
    return np.all(np.isfinite(xs), axis=-1)


def _clean_distance(xs: Array, distance: Array) -> Array:
    with np.errstate(invalid="ignore"):
        return np.where(_finite_rows(xs), np.maximum(distance, 0.0), 0.0)


class DomainSpec:
    """Open state space X with a boundary distance; membership is distance > 0"""

    kind: DomainKind
    dim: int
    bounded: bool

    def boundary_distance(self, xs: Array) -> Array:
        raise NotImplementedError

    def contains(self, xs: Array) -> Array:
        return self.boundary_distance(xs) > 0.0

    def near_boundary(self, distances) -> Array:
        """Deterministic points at the given distances from the boundary"""
        raise NotImplementedError

    def far_field(self, radii) -> Array:
        """Deterministic in-domain points with |x| equal to the given radii"""
        raise NotImplementedError

    def sample_interior(self, rng: np.random.Generator, count: int, margin: float = 0.0, extent: float = 3.0) -> Array:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind.value}


@dataclasses.dataclass(frozen=True)
class IntervalDomain(DomainSpec):
    a: float
    b: float

    kind = DomainKind.INTERVAL
    dim = 1
    bounded = True

    def __post_init__(self):
        if not (0.0 <= self.a < self.b < math.inf):
            raise ParameterDomainError(f"Interval requires 0 <= a < b < inf, got a={self.a}, b={self.b}")

    def boundary_distance(self, xs: Array) -> Array:
        x = np.asarray(xs, dtype=float)[..., 0]
        return _clean_distance(np.asarray(xs), np.minimum(x - self.a, self.b - x))

    def near_boundary(self, distances) -> Array:
        d = np.asarray(distances, dtype=float)
        d = d[(d > 0) & (d < 0.5 * (self.b - self.a))]
        return np.concatenate([self.a + d, self.b - d])[:, None]

    def far_field(self, radii) -> Array:
        return np.empty((0, 1))

    def sample_interior(self, rng, count, margin=0.0, extent=3.0) -> Array:
        return rng.uniform(self.a + margin, self.b - margin, size=(count, 1))

    def describe(self) -> dict:
        return {"kind": self.kind.value, "a": self.a, "b": self.b}


@dataclasses.dataclass(frozen=True)
class HalfPlaneOrderDomain(DomainSpec):
    """X = {(x1, x2): x1 < x2}"""

    kind = DomainKind.HALF_PLANE_ORDER
    dim = 2
    bounded = False

    def boundary_distance(self, xs: Array) -> Array:
        xs = np.asarray(xs, dtype=float)
        return _clean_distance(xs, (xs[..., 1] - xs[..., 0]) / math.sqrt(2.0))

    def near_boundary(self, distances, offsets=(-1.0, 0.0, 1.0)) -> Array:
        d = np.asarray(distances, dtype=float)
        d = d[d > 0]
        t, dd = np.meshgrid(np.asarray(offsets, dtype=float), d, indexing="ij")
        t, dd = t.ravel(), dd.ravel()
        return np.stack([(t - dd) / math.sqrt(2.0), (t + dd) / math.sqrt(2.0)], axis=-1)

    def far_field(self, radii) -> Array:
        radii = np.asarray(radii, dtype=float)
        theta = math.pi / 4.0 + math.pi * np.arange(1, 8) / 8.0
        rr, tt = np.meshgrid(radii, theta, indexing="ij")
        rr, tt = rr.ravel(), tt.ravel()
        return np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1)

    def sample_interior(self, rng, count, margin=0.0, extent=3.0) -> Array:
        center = rng.uniform(-extent, extent, size=count)
        gap = math.sqrt(2.0) * margin + extent * (1.0 - rng.random(count))
        return np.stack([center - 0.5 * gap, center + 0.5 * gap], axis=-1)


@dataclasses.dataclass(frozen=True)
class DiskDomain(DomainSpec):
    radius: float

    kind = DomainKind.DISK
    dim = 2
    bounded = True

    def __post_init__(self):
        if not (0.0 < self.radius < math.inf):
            raise ParameterDomainError(f"Disk radius must be positive, got {self.radius}")

    def boundary_distance(self, xs: Array) -> Array:
        xs = np.asarray(xs, dtype=float)
        return _clean_distance(xs, self.radius - np.linalg.norm(xs, axis=-1))

    def near_boundary(self, distances, angles: int = 8) -> Array:
        d = np.asarray(distances, dtype=float)
        d = d[(d > 0) & (d < self.radius)]
        theta = 2.0 * math.pi * np.arange(angles) / angles
        rr, tt = np.meshgrid(self.radius - d, theta, indexing="ij")
        rr, tt = rr.ravel(), tt.ravel()
        return np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1)

    def far_field(self, radii) -> Array:
        return np.empty((0, 2))

    def sample_interior(self, rng, count, margin=0.0, extent=3.0) -> Array:
        r = (self.radius - margin) * np.sqrt(rng.random(count))
        theta = rng.uniform(0.0, 2.0 * math.pi, size=count)
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def describe(self) -> dict:
        return {"kind": self.kind.value, "radius": self.radius}


@dataclasses.dataclass(frozen=True)
class AllSpaceDomain(DomainSpec):
    dim: int = 1

    kind = DomainKind.ALL_SPACE
    bounded = False

    def boundary_distance(self, xs: Array) -> Array:
        xs = np.asarray(xs, dtype=float)
        return np.where(_finite_rows(xs), np.inf, 0.0)

    def near_boundary(self, distances) -> Array:
        return np.empty((0, self.dim))

    def far_field(self, radii) -> Array:
        radii = np.asarray(radii, dtype=float)
        directions = np.concatenate([np.eye(self.dim), -np.eye(self.dim)])
        return (radii[:, None, None] * directions[None]).reshape(-1, self.dim)

    def sample_interior(self, rng, count, margin=0.0, extent=3.0) -> Array:
        return rng.uniform(-extent, extent, size=(count, self.dim))

    def describe(self) -> dict:
        return {"kind": self.kind.value, "dim": self.dim}


# diffusion profiles
@dataclasses.dataclass(frozen=True)
class DiffusionProfile:
    """Scalar D(s) > 0 on the open domain together with D'(s) and the thermal energy kBT"""

    D: Callable[[Array], Array]
    D_prime: Callable[[Array], Array]
    kBT: float = 1.0


@dataclasses.dataclass(frozen=True)
class ReducedCoordinate:
    """Scalar coordinate s(x) the diffusion profile is evaluated on, with its gradient"""

    value: Callable[[Array], Array]
    gradient: Callable[[Array], Array]


IDENTITY_1D = ReducedCoordinate(value=lambda xs: xs[:, 0], gradient=lambda xs: np.ones_like(xs))
FIRST_COORDINATE = ReducedCoordinate(
    value=lambda xs: xs[:, 0],
    gradient=lambda xs: np.eye(xs.shape[-1])[0][None].repeat(xs.shape[0], axis=0),
)
SEPARATION = ReducedCoordinate(
    value=lambda xs: xs[:, 1] - xs[:, 0],
    gradient=lambda xs: np.broadcast_to(np.array([-1.0, 1.0]), xs.shape).copy(),
)
RADIUS_SQUARED = ReducedCoordinate(value=lambda xs: np.sum(xs * xs, axis=-1), gradient=lambda xs: 2.0 * xs)


def builtin_diffusion_model1(a: float = 0.0, b: float = 1.0, D_max: float = 1.0, kBT: float = 1.0) -> DiffusionProfile:
    """D(x) = D_max sin^2(pi (x - a) / (b - a)): vanishes at both walls, peaks at the midpoint"""
    if not a < b:
        raise ParameterDomainError(f"Profile requires a < b, got a={a}, b={b}")
    _require_positive(D_max=D_max, kBT=kBT)
    scale = math.pi / (b - a)

    def D(x):
        return D_max * np.sin(scale * (x - a)) ** 2

    def D_prime(x):
        return D_max * scale * np.sin(2.0 * scale * (x - a))

    return DiffusionProfile(D=D, D_prime=D_prime, kBT=kBT)


def builtin_diffusion_dlvo(D_SE: float = 1.0, alpha: float = 1.0, kBT: float = 1.0) -> DiffusionProfile:
    """D(d) = D_SE (1 - exp(-alpha d)): D(0) = 0, increasing, concave, tends to D_SE"""
    _require_positive(D_SE=D_SE, alpha=alpha, kBT=kBT)
    return DiffusionProfile(
        D=lambda d: D_SE * -np.expm1(-alpha * d),
        D_prime=lambda d: D_SE * alpha * np.exp(-alpha * d),
        kBT=kBT,
    )


def builtin_diffusion_pore(C_radius: float = 1.0, D0: float = 1.0, beta: float = 0.5, kBT: float = 1.0) -> DiffusionProfile:
    """D(r) = D0 (1 - r/C^2)(1 + beta r/C^2) on r = |x|^2 in [0, C^2]: zero at the wall, decreasing, concave"""
    _require_positive(C_radius=C_radius, D0=D0, kBT=kBT)
    if not 0.0 < beta < 1.0:
        raise ParameterDomainError(f"beta must lie in (0, 1), got {beta}")
    c2 = C_radius * C_radius
    return DiffusionProfile(
        D=lambda r: D0 * (1.0 - r / c2) * (1.0 + beta * r / c2),
        D_prime=lambda r: D0 / c2 * (beta - 1.0 - 2.0 * beta * r / c2),
        kBT=kBT,
    )


# potentials
@dataclasses.dataclass(frozen=True)
class WallGravityPotential:
    """Double-layer walls, effective gravity and soft walls on (a, b)"""

    a: float
    b: float
    B: float
    kappa: float
    lam: float
    G_eff: float

    def value(self, x: Array) -> Array:
        u, w = x - self.a, self.b - x
        double_layer = self.B / self.kappa * (np.exp(-self.kappa * u) + np.exp(-self.kappa * w))
        soft_walls = np.exp(-self.lam * u) / u + np.exp(-self.lam * w) / w
        return double_layer + self.G_eff * x + soft_walls

    def first(self, x: Array) -> Array:
        u, w = x - self.a, self.b - x
        double_layer = self.B * (np.exp(-self.kappa * w) - np.exp(-self.kappa * u))
        soft_walls = np.exp(-self.lam * w) * (self.lam / w + 1.0 / w**2) - np.exp(-self.lam * u) * (self.lam / u + 1.0 / u**2)
        return double_layer + self.G_eff + soft_walls

    def second(self, x: Array) -> Array:
        u, w = x - self.a, self.b - x
        lam = self.lam
        double_layer = self.B * self.kappa * (np.exp(-self.kappa * u) + np.exp(-self.kappa * w))
        soft_walls = np.exp(-lam * u) * (lam**2 / u + 2.0 * lam / u**2 + 2.0 / u**3) + np.exp(-lam * w) * (
            lam**2 / w + 2.0 * lam / w**2 + 2.0 / w**3
        )
        return double_layer + soft_walls


@dataclasses.dataclass(frozen=True)
class DlvoPotential:
    """U(x1, x2) = k/2 (x1^2 + x2^2) + c exp(-d/l) / d with d = x2 - x1"""

    k_spring: float
    c: float
    l: float  # noqa: E741

    def pair(self, d: Array) -> Array:
        return self.c * np.exp(-d / self.l) / d

    def pair_first(self, d: Array) -> Array:
        return -self.c * np.exp(-d / self.l) / d * (1.0 / self.l + 1.0 / d)

    def pair_second(self, d: Array) -> Array:
        return self.c * np.exp(-d / self.l) / d * (1.0 / self.l**2 + 2.0 / (self.l * d) + 2.0 / d**2)

    def value(self, xs: Array) -> Array:
        return 0.5 * self.k_spring * np.sum(xs * xs, axis=-1) + self.pair(xs[:, 1] - xs[:, 0])

    def gradient(self, xs: Array) -> Array:
        dp = self.pair_first(xs[:, 1] - xs[:, 0])
        return self.k_spring * xs + np.stack([-dp, dp], axis=-1)

    def hessian(self, xs: Array) -> Array:
        d2 = self.pair_second(xs[:, 1] - xs[:, 0])
        result = np.empty((xs.shape[0], 2, 2))
        result[:, 0, 0] = result[:, 1, 1] = self.k_spring + d2
        result[:, 0, 1] = result[:, 1, 0] = -d2
        return result


@dataclasses.dataclass(frozen=True)
class PorePotential:
    """Radial U(x) = P(|x|^2) with P(r) = B exp(-kappa (C^2 - r)) / (kappa (C^2 - r))"""

    C_radius: float
    B: float
    kappa: float

    def radial(self, r: Array) -> Array:
        u = self.C_radius**2 - r
        return self.B * np.exp(-self.kappa * u) / (self.kappa * u)

    def radial_first(self, r: Array) -> Array:
        u = self.C_radius**2 - r
        return self.B * np.exp(-self.kappa * u) * (1.0 / u + 1.0 / (self.kappa * u**2))

    def radial_second(self, r: Array) -> Array:
        u = self.C_radius**2 - r
        return self.B * np.exp(-self.kappa * u) * (self.kappa / u + 2.0 / u**2 + 2.0 / (self.kappa * u**3))

    def value(self, xs: Array) -> Array:
        return self.radial(np.sum(xs * xs, axis=-1))

    def gradient(self, xs: Array) -> Array:
        return 2.0 * self.radial_first(np.sum(xs * xs, axis=-1))[:, None] * xs

    def hessian(self, xs: Array) -> Array:
        r = np.sum(xs * xs, axis=-1)
        eye = np.eye(xs.shape[-1])
        return 2.0 * self.radial_first(r)[:, None, None] * eye + 4.0 * self.radial_second(r)[:, None, None] * np.einsum(
            "ri,rj->rij", xs, xs
        )


# model
@dataclasses.dataclass(frozen=True, eq=False)
class Model:
    name: str
    dim_n: int
    dim_k: int
    force: PointMap
    friction: PointMap
    diffusion: PointMap
    domain: DomainSpec
    analytic_friction_grad: PointMap | None = None
    # (V, grad V, hess V), each vectorized over points
    lyapunov_fn: tuple[PointMap, PointMap, PointMap] | None = None
    # isotropic models: xs -> (g, s, grad g) with gamma = g I, sigma = s I, k = n
    scalar_coefficients: Callable[[Array], tuple[Array, Array, Array]] | None = None
    profile: DiffusionProfile | None = None
    reduced: ReducedCoordinate | None = None
    default_x0: tuple[float, ...] | None = None
    params: dict[str, Any] = dataclasses.field(default_factory=dict)

    @property
    def isotropic(self) -> bool:
        return self.scalar_coefficients is not None

    @property
    def x0(self) -> np.ndarray:
        if self.default_x0 is None:
            return np.zeros(self.dim_n)
        return np.asarray(self.default_x0, dtype=float)


def _require_positive(**values):
    for name, value in values.items():
        if not (isinstance(value, int | float) and math.isfinite(value) and value > 0):
            raise ParameterDomainError(f"Parameter {name} must be positive and finite, got {value!r}")


def _sample_points(domain: DomainSpec, count: int = 256, seed: int = 0) -> Array:
    rng = np.random.default_rng(seed)
    return np.concatenate(
        [
            domain.sample_interior(rng, count),
            domain.near_boundary(np.geomspace(1e-1, 1e-6, 6)),
            domain.far_field(np.geomspace(1.0, 1e3, 4)),
        ]
    )


def _constant_tensor(n: int) -> PointMap:
    return lambda xs: np.zeros((xs.shape[0], n, n, n))


def _identity_stack(values: Array, n: int) -> Array:
    return values[:, None, None] * np.eye(n)


def from_fluctuation_dissipation(
    profile: DiffusionProfile,
    force: PointMap,
    domain: DomainSpec,
    n: int,
    reduced: ReducedCoordinate | None = None,
    name: str = "custom",
    lyapunov_fn: tuple[PointMap, PointMap, PointMap] | None = None,
    default_x0: tuple[float, ...] | None = None,
    params: dict | None = None,
) -> Model:
    """gamma = kBT / D(s(x)) I_n and sigma = sqrt(2 kBT^2 / D(s(x))) I_n, so that sigma sigma^T = 2 kBT gamma"""
    _require_positive(kBT=profile.kBT)
    if domain.dim != n:
        raise ConfigurationError(f"Domain dimension {domain.dim} differs from model dimension {n}")
    if reduced is None:
        if n != 1:
            raise ConfigurationError("Models with n > 1 need a reduced coordinate for the diffusion profile")
        reduced = IDENTITY_1D

    points = _sample_points(domain)
    try:
        with np.errstate(all="ignore"):
            values = np.asarray(profile.D(reduced.value(points)), dtype=float)
    except (ArithmeticError, ValueError, TypeError) as e:
        raise DomainMismatchError(f"Diffusion profile failed on the domain: {e}") from e
    if values.shape != points.shape[:1] or not np.all(np.isfinite(values)) or np.any(values <= 0.0):
        raise DomainMismatchError("Diffusion profile must be finite and positive on the whole open domain")

    kBT = profile.kBT

    def scalar_coefficients(xs):
        s = reduced.value(xs)
        D = profile.D(s)
        g = kBT / D
        grad_g = (-kBT * profile.D_prime(s) / D**2)[:, None] * reduced.gradient(xs)
        return g, np.sqrt(2.0 * kBT * kBT / D), grad_g

    def friction(xs):
        return _identity_stack(kBT / profile.D(reduced.value(xs)), n)

    def diffusion(xs):
        return _identity_stack(np.sqrt(2.0 * kBT * kBT / profile.D(reduced.value(xs))), n)

    def friction_grad(xs):
        grad_g = scalar_coefficients(xs)[2]
        return np.einsum("ij,rl->rijl", np.eye(n), grad_g)

    return Model(
        name=name,
        dim_n=n,
        dim_k=n,
        force=force,
        friction=friction,
        diffusion=diffusion,
        domain=domain,
        analytic_friction_grad=friction_grad,
        lyapunov_fn=lyapunov_fn,
        scalar_coefficients=scalar_coefficients,
        profile=profile,
        reduced=reduced,
        default_x0=default_x0,
        params=params or {},
    )


def wall_gravity_model(
    a: float = 0.0,
    b: float = 1.0,
    B: float = 5.0,
    kappa: float = 10.0,
    lam: float = 100.0,
    G_eff: float = 1.0,
    kBT: float = 1.0,
    D_profile: DiffusionProfile | None = None,
    D_max: float = 1.0,
) -> Model:
    """Particle in a vertical cylinder (a, b) with double-layer walls, gravity and soft walls"""
    _require_positive(B=B, kappa=kappa, lam=lam, kBT=kBT)
    if not math.isfinite(G_eff):
        raise ParameterDomainError(f"Parameter G_eff must be finite, got {G_eff!r}")
    domain = IntervalDomain(a, b)
    if lam < 10.0 * kappa:
        warnings.warn(f"Soft-wall decay lambda={lam} is not much larger than kappa={kappa}", ParameterWarning, stacklevel=2)

    if D_profile is None:
        D_profile = builtin_diffusion_model1(a, b, D_max=D_max, kBT=kBT)
    elif D_profile.kBT != kBT:
        raise ParameterDomainError(f"Profile kBT={D_profile.kBT} differs from model kBT={kBT}")

    potential = WallGravityPotential(a=a, b=b, B=B, kappa=kappa, lam=lam, G_eff=G_eff)
    # shift keeps V >= 0 when gravity pulls towards negative values
    shift = max(0.0, -min(G_eff * a, G_eff * b))

    lyapunov_fn = (
        lambda xs: potential.value(xs[:, 0]) + shift,
        lambda xs: potential.first(xs[:, 0])[:, None],
        lambda xs: potential.second(xs[:, 0])[:, None, None],
    )
    return from_fluctuation_dissipation(
        D_profile,
        force=lambda xs: -potential.first(xs[:, 0])[:, None],
        domain=domain,
        n=1,
        name=ModelName.WALL_GRAVITY.value,
        lyapunov_fn=lyapunov_fn,
        default_x0=(0.5 * (a + b),),
        params=dict(a=a, b=b, B=B, kappa=kappa, lam=lam, G_eff=G_eff, kBT=kBT, D_max=D_max),
    )


def dlvo_pair_model(
    k_spring: float = 0.1,
    c: float = 1.0,
    l: float = 0.5,  # noqa: E741
    kBT: float = 1.0,
    D_profile: DiffusionProfile | None = None,
    D_SE: float = 1.0,
    alpha: float = 1.0,
) -> Model:
    """Two particles on a line, DLVO pair repulsion in a shallow common harmonic trap"""
    _require_positive(k_spring=k_spring, c=c, l=l, kBT=kBT)
    if D_profile is None:
        D_profile = builtin_diffusion_dlvo(D_SE=D_SE, alpha=alpha, kBT=kBT)
    elif D_profile.kBT != kBT:
        raise ParameterDomainError(f"Profile kBT={D_profile.kBT} differs from model kBT={kBT}")

    potential = DlvoPotential(k_spring=k_spring, c=c, l=l)
    return from_fluctuation_dissipation(
        D_profile,
        force=lambda xs: -potential.gradient(xs),
        domain=HalfPlaneOrderDomain(),
        n=2,
        reduced=SEPARATION,
        name=ModelName.DLVO_PAIR.value,
        lyapunov_fn=(potential.value, potential.gradient, potential.hessian),
        default_x0=(-0.5, 0.5),
        params=dict(k_spring=k_spring, c=c, l=l, kBT=kBT, D_SE=D_SE, alpha=alpha),
    )


def rotational_pore_model(
    C_radius: float = 1.0,
    B: float = 5.0,
    kappa: float = 10.0,
    Omega: float = 1.0,
    kBT: float = 1.0,
    D_profile: DiffusionProfile | None = None,
    D0: float = 1.0,
    beta: float = 0.5,
) -> Model:
    """Particle in a circular pore of radius C driven by the rotational field gamma Omega (-x2, x1)"""
    _require_positive(C_radius=C_radius, B=B, kappa=kappa, kBT=kBT)
    if not math.isfinite(Omega):
        raise ParameterDomainError(f"Parameter Omega must be finite, got {Omega!r}")
    if D_profile is None:
        D_profile = builtin_diffusion_pore(C_radius=C_radius, D0=D0, beta=beta, kBT=kBT)
    elif D_profile.kBT != kBT:
        raise ParameterDomainError(f"Profile kBT={D_profile.kBT} differs from model kBT={kBT}")

    potential = PorePotential(C_radius=C_radius, B=B, kappa=kappa)

    def force(xs):
        g = kBT / D_profile.D(RADIUS_SQUARED.value(xs))
        rotation = np.stack([-xs[:, 1], xs[:, 0]], axis=-1)
        return -potential.gradient(xs) + (g * Omega)[:, None] * rotation

    return from_fluctuation_dissipation(
        D_profile,
        force=force,
        domain=DiskDomain(C_radius),
        n=2,
        reduced=RADIUS_SQUARED,
        name=ModelName.ROTATIONAL_PORE.value,
        lyapunov_fn=(potential.value, potential.gradient, potential.hessian),
        default_x0=(0.3 * C_radius, 0.0),
        params=dict(C_radius=C_radius, B=B, kappa=kappa, Omega=Omega, kBT=kBT, D0=D0, beta=beta),
    )


# benchmarks
def constant_benchmark(n: int = 1, g: float = 1.0, s: float = 1.0, k_spring: float = 1.0, name: str | None = None) -> Model:
    """gamma = g I, sigma = s I and F = -k x on the whole space"""
    _require_positive(n=n, g=g, k_spring=k_spring)
    if not (math.isfinite(s) and s >= 0):
        raise ParameterDomainError(f"Parameter s must be nonnegative, got {s!r}")
    n = int(n)

    def scalar_coefficients(xs):
        rows = xs.shape[0]
        return np.full(rows, g), np.full(rows, s), np.zeros_like(xs)

    return Model(
        name=name or ModelName.CONSTANT.value,
        dim_n=n,
        dim_k=n,
        force=lambda xs: -k_spring * xs,
        friction=lambda xs: np.broadcast_to(g * np.eye(n), (xs.shape[0], n, n)).copy(),
        diffusion=lambda xs: np.broadcast_to(s * np.eye(n), (xs.shape[0], n, n)).copy(),
        domain=AllSpaceDomain(n),
        analytic_friction_grad=_constant_tensor(n),
        lyapunov_fn=(
            lambda xs: 0.5 * k_spring * np.sum(xs * xs, axis=-1),
            lambda xs: k_spring * xs,
            lambda xs: np.broadcast_to(k_spring * np.eye(n), (xs.shape[0], n, n)).copy(),
        ),
        scalar_coefficients=scalar_coefficients,
        default_x0=(1.0,) * n,
        params=dict(n=n, g=g, s=s, k_spring=k_spring),
    )


def noiseless_benchmark(n: int = 1, g: float = 1.0, k_spring: float = 1.0) -> Model:
    model = constant_benchmark(n=n, g=g, s=0.0, k_spring=k_spring, name=ModelName.NOISELESS.value)
    return dataclasses.replace(model, params=dict(n=int(n), g=g, k_spring=k_spring))


def fd_constant_model(n: int = 1, D0: float = 1.0, kBT: float = 1.0, k_spring: float = 1.0) -> Model:
    """Fluctuation-dissipation model with constant diffusion D0 in a harmonic trap"""
    _require_positive(n=n, D0=D0, kBT=kBT, k_spring=k_spring)
    n = int(n)
    profile = DiffusionProfile(
        D=lambda s: np.full_like(s, D0, dtype=float),
        D_prime=lambda s: np.zeros_like(s, dtype=float),
        kBT=kBT,
    )
    return from_fluctuation_dissipation(
        profile,
        force=lambda xs: -k_spring * xs,
        domain=AllSpaceDomain(n),
        n=n,
        reduced=IDENTITY_1D if n == 1 else FIRST_COORDINATE,
        name=ModelName.FD_CONSTANT.value,
        lyapunov_fn=(
            lambda xs: 0.5 * k_spring * np.sum(xs * xs, axis=-1),
            lambda xs: k_spring * xs,
            lambda xs: np.broadcast_to(k_spring * np.eye(n), (xs.shape[0], n, n)).copy(),
        ),
        default_x0=(1.0,) * n,
        params=dict(n=n, D0=D0, kBT=kBT, k_spring=k_spring),
    )


def explosive_toy() -> Model:
    """dx = x^2 dt in the limit: gamma = 1, sigma = 0, F = x^2"""

    def scalar_coefficients(xs):
        rows = xs.shape[0]
        return np.ones(rows), np.zeros(rows), np.zeros_like(xs)

    return Model(
        name=ModelName.EXPLOSIVE.value,
        dim_n=1,
        dim_k=1,
        force=lambda xs: xs * xs,
        friction=lambda xs: np.ones((xs.shape[0], 1, 1)),
        diffusion=lambda xs: np.zeros((xs.shape[0], 1, 1)),
        domain=AllSpaceDomain(1),
        analytic_friction_grad=_constant_tensor(1),
        lyapunov_fn=(
            lambda xs: xs[:, 0] ** 2,
            lambda xs: 2.0 * xs,
            lambda xs: np.full((xs.shape[0], 1, 1), 2.0),
        ),
        scalar_coefficients=scalar_coefficients,
        default_x0=(0.5,),
        params={},
    )


# limiting equation
def limiting_coefficients_batch(model: Model, xs: Array, h: Array | None = None) -> tuple[Array, Array]:
    """Unchecked drift (R, n) and diffusion (R, n, k) of the limiting equation"""
    if model.isotropic:
        g, s, grad_g = model.scalar_coefficients(xs)
        # S = -grad g / g^2 * s^2 / (2 g)
        drift = model.force(xs) / g[:, None] - grad_g * (s * s / (2.0 * g**3))[:, None]
        return drift, _identity_stack(s / g, model.dim_n)

    gamma_inv = np.linalg.inv(model.friction(xs))
    drift = np.einsum("rij,rj->ri", gamma_inv, model.force(xs)) + noise_induced_drift_batch(model, xs, h)
    return drift, gamma_inv @ model.diffusion(xs)


def _ensure_in_domain(model: Model, xs: Array):
    if np.any(~model.domain.contains(xs)):
        raise ParameterDomainError("Point is outside of the model domain")


def limiting_drift(model: Model, x) -> np.ndarray:
    """inv(gamma) F + S, with S assembled through the Lyapunov pipeline"""
    xs, single = as_point_batch(x)
    _ensure_in_domain(model, xs)
    gamma_inv = friction_inverse(model.friction(xs))
    drift = np.einsum("rij,rj->ri", gamma_inv, model.force(xs)) + noise_induced_drift(model, xs)
    return unbatch(drift, single)


def limiting_diffusion(model: Model, x) -> np.ndarray:
    xs, single = as_point_batch(x)
    _ensure_in_domain(model, xs)
    return unbatch(friction_inverse(model.friction(xs)) @ model.diffusion(xs), single)


def check_model(model: Model, count: int = 1000, seed: int = 0) -> None:
    """Positivity of gamma and finiteness of the coefficients on sampled domain points"""
    rng = np.random.default_rng(seed)
    xs = model.domain.sample_interior(rng, count)
    gamma = model.friction(xs)
    try:
        ensure_positive_friction(gamma)
    except FrictionNotPositiveError:
        logger.warning(f"model {model.name}: friction not positive on sampled domain points")
        raise
    values = [model.force(xs), gamma, model.diffusion(xs)]
    if not all(np.all(np.isfinite(v)) for v in values):
        raise ParameterDomainError(f"Model {model.name} has non-finite coefficients inside its domain")


# registry
BUILTIN_MODELS: dict[ModelName, Callable[..., Model]] = {
    ModelName.WALL_GRAVITY: wall_gravity_model,
    ModelName.DLVO_PAIR: dlvo_pair_model,
    ModelName.ROTATIONAL_PORE: rotational_pore_model,
    ModelName.CONSTANT: constant_benchmark,
    ModelName.NOISELESS: noiseless_benchmark,
    ModelName.FD_CONSTANT: fd_constant_model,
    ModelName.EXPLOSIVE: explosive_toy,
}

_PARAM_ALIASES = {"lambda": "lam"}


def build_model(name: str | ModelName, params: dict | None = None) -> Model:
    model_name = tf_model_name(name)
    kwargs = {_PARAM_ALIASES.get(k, k): v for k, v in (params or {}).items()}
    for key, value in kwargs.items():
        if isinstance(value, bool) or not isinstance(value, int | float):
            raise ConfigurationError(f"Model parameter {key} must be a number, got {value!r}")
    try:
        model = BUILTIN_MODELS[model_name](**kwargs)
    except TypeError as e:
        raise ConfigurationError(f"Invalid parameters for model {model_name.value}: {e}") from e
    logger.debug(f"model built: {model_name.value} params={model.params}")
    return model


def load_model_document(source: str | Path | dict) -> tuple[Model, dict]:
    """Reads a {"model": name, "params": {...}} document, returns the model and the whole document"""
    if isinstance(source, dict):
        document = source
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigurationError(f"Config file not found: {path}")
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Invalid JSON in {path}: {e}") from e
    if not isinstance(document, dict) or "model" not in document:
        raise ConfigurationError("Config document must be an object with a 'model' key")
    params = document.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigurationError("Config 'params' must be an object")
    return build_model(document["model"], params), document


def model_document(model: Model) -> dict:
    return {"model": model.name, "params": dict(model.params), "domain": model.domain.describe()}
