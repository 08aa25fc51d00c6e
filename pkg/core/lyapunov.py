"""
Matrix Lyapunov equation and the noise-induced drift of the small-mass limit.

The limiting equation carries the drift ``S_i = d_l[inv(gamma)_ij] J_jl`` where ``J`` solves
``gamma J + J gamma^T = sigma sigma^T``. Every function accepts either a single matrix / point or a
batch with a leading axis; batched rows never interact, so a row computed inside a batch equals the
same row computed alone.

Tensor layout for derivatives is ``[..., i, j, l] = d/dx_l M_ij``.
"""

from __future__ import annotations

import dataclasses
from typing import TYPE_CHECKING

import numpy as np

from core.exc import BoundaryTooCloseError, FrictionNotPositiveError, HorizonTooShortError, SingularSystemError

if TYPE_CHECKING:
    from core.models import Model

__all__ = [
    "LyapunovSolution",
    "expm",
    "friction_min_eigenvalue",
    "ensure_positive_friction",
    "solve_lyapunov",
    "integral_lyapunov",
    "friction_inverse",
    "grad_friction_inverse",
    "noise_induced_drift",
    "default_fd_step",
    "lyapunov_batch",
    "friction_inverse_gradient_batch",
    "noise_induced_drift_batch",
]

RESIDUAL_TOL = 1e-12
CONDITION_LIMIT = 1e14
TAIL_TOL = 1e-12

# diagonal Pade(6, 6) coefficients of exp
_PADE6 = (1.0, 1.0 / 2.0, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0)
_PADE6_THETA = 0.5
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)


@dataclasses.dataclass(frozen=True)
class LyapunovSolution:
    J: np.ndarray
    residual_norm: float | np.ndarray


# utils
def _as_matrix_batch(value) -> tuple[np.ndarray, bool]:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 2:
        return arr[None], True
    return arr, False


def as_point_batch(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        return arr[None], True
    return arr, False


def unbatch(value, single: bool):
    return value[0] if single else value


def default_fd_step(x: np.ndarray) -> np.ndarray:
    """Central-difference step 1e-5 * (1 + |x|) per point"""
    return 1e-5 * (1.0 + np.linalg.norm(np.atleast_2d(x), axis=-1))


# matrix exponential
def expm(a) -> np.ndarray:
    """Scaling and squaring with the diagonal Pade(6, 6) approximant, scaled per matrix"""
    mats, single = _as_matrix_batch(a)
    n = mats.shape[-1]
    ident = np.eye(n)

    norm = np.abs(mats).sum(axis=-2).max(axis=-1)
    finite = np.isfinite(norm)
    with np.errstate(divide="ignore", invalid="ignore"):
        squarings = np.where(finite & (norm > _PADE6_THETA), np.ceil(np.log2(norm / _PADE6_THETA)), 0.0)
    squarings = squarings.astype(np.int64)

    scaled = mats / np.ldexp(1.0, squarings)[:, None, None]
    a2 = scaled @ scaled
    a4 = a2 @ a2
    a6 = a4 @ a2
    b = _PADE6
    u = scaled @ (b[1] * ident + b[3] * a2 + b[5] * a4)
    v = b[0] * ident + b[2] * a2 + b[4] * a4 + b[6] * a6
    result = np.linalg.solve(v - u, v + u)

    for level in range(int(squarings.max(initial=0))):
        mask = (squarings > level)[:, None, None]
        result = np.where(mask, result @ result, result)

    result[~finite] = np.nan
    return unbatch(result, single)


# friction positivity
def friction_min_eigenvalue(gamma) -> np.ndarray | float:
    """Smallest eigenvalue of the symmetric part (gamma + gamma^T) / 2"""
    mats, single = _as_matrix_batch(gamma)
    sym = 0.5 * (mats + np.swapaxes(mats, -1, -2))
    return unbatch(np.linalg.eigvalsh(sym)[..., 0], single)


def ensure_positive_friction(gamma) -> None:
    lam = np.atleast_1d(friction_min_eigenvalue(gamma))
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0.0):
        raise FrictionNotPositiveError(f"Friction symmetric part has eigenvalue {float(np.nanmin(lam)):.6g} <= 0")


# Lyapunov solvers
def _kronecker_operator(gamma: np.ndarray) -> np.ndarray:
    # row-major vec: vec(gamma J) = (gamma (x) I) vec(J), vec(J gamma^T) = (I (x) gamma) vec(J)
    r, n, _ = gamma.shape
    ident = np.eye(n)
    left = np.einsum("rac,bd->rabcd", gamma, ident)
    right = np.einsum("ac,rbd->rabcd", ident, gamma)
    return (left + right).reshape(r, n * n, n * n)


def _lyapunov_residual(gamma: np.ndarray, q: np.ndarray, j: np.ndarray) -> np.ndarray:
    res = gamma @ j + j @ np.swapaxes(gamma, -1, -2) - q
    return np.linalg.norm(res, axis=(-2, -1))


def lyapunov_batch(gamma: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Unchecked batched solve of gamma J + J gamma^T = q, shapes (R, n, n)"""
    r, n, _ = gamma.shape
    if n == 1:
        return q / (2.0 * gamma)
    vec = np.linalg.solve(_kronecker_operator(gamma), q.reshape(r, n * n, 1))
    j = vec.reshape(r, n, n)
    return 0.5 * (j + np.swapaxes(j, -1, -2))


def solve_lyapunov(gamma, sigma_sq) -> LyapunovSolution:
    """Solves J gamma^T + gamma J = sigma sigma^T by Kronecker vectorization"""
    g, single = _as_matrix_batch(gamma)
    q, _ = _as_matrix_batch(sigma_sq)
    q = np.broadcast_to(q, g.shape)
    ensure_positive_friction(g)

    operator = _kronecker_operator(g)
    cond = np.linalg.cond(operator)
    if not np.all(np.isfinite(cond)) or np.any(cond > CONDITION_LIMIT):
        raise SingularSystemError(f"Lyapunov operator condition number {float(np.max(cond)):.3g} exceeds limit")
    try:
        j = lyapunov_batch(g, np.ascontiguousarray(q))
    except np.linalg.LinAlgError as e:
        raise SingularSystemError(f"Lyapunov operator is singular: {e}") from e

    residual = _lyapunov_residual(g, q, j)
    scale = 1.0 + np.linalg.norm(q, axis=(-2, -1))
    if np.any(residual > RESIDUAL_TOL * scale):
        raise SingularSystemError(f"Lyapunov residual {float(np.max(residual / scale)):.3g} above tolerance {RESIDUAL_TOL:g}")
    return LyapunovSolution(J=unbatch(j, single), residual_norm=float(residual[0]) if single else residual)


def integral_lyapunov(gamma, sigma_sq, quadrature_horizon: float, step: float) -> LyapunovSolution:
    """J = int_0^H exp(-t gamma) sigma sigma^T exp(-t gamma^T) dt by composite Gauss-Legendre panels"""
    g = np.atleast_2d(np.asarray(gamma, dtype=float))
    q = np.atleast_2d(np.asarray(sigma_sq, dtype=float))
    ensure_positive_friction(g)
    if quadrature_horizon <= 0 or step <= 0:
        raise HorizonTooShortError(f"Horizon {quadrature_horizon} and step {step} must be positive")

    tail = np.linalg.norm(expm(-quadrature_horizon * g), ord=2)
    if not tail < TAIL_TOL:
        raise HorizonTooShortError(f"|exp(-H gamma)| = {tail:.3g} at H = {quadrature_horizon}, need < {TAIL_TOL}")

    panels = int(np.ceil(quadrature_horizon / step))
    edges = np.linspace(0.0, quadrature_horizon, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _GAUSS_NODES[None, :]).ravel()
    weights = (half[:, None] * _GAUSS_WEIGHTS[None, :]).ravel()

    e = expm(-nodes[:, None, None] * g[None])
    integrand = e @ q[None] @ np.swapaxes(e, -1, -2)
    j = np.einsum("t,tij->ij", weights, integrand)
    j = 0.5 * (j + j.T)
    residual = float(_lyapunov_residual(g[None], q[None], j[None])[0])
    return LyapunovSolution(J=j, residual_norm=residual)


# friction inverse and its derivatives
def friction_inverse(gamma) -> np.ndarray:
    g, single = _as_matrix_batch(gamma)
    cond = np.linalg.cond(g)
    if not np.all(np.isfinite(cond)) or np.any(cond > CONDITION_LIMIT):
        raise SingularSystemError(f"Friction condition number {float(np.max(cond)):.3g} exceeds limit")
    return unbatch(np.linalg.inv(g), single)


def friction_inverse_gradient_batch(model: Model, xs: np.ndarray, h: np.ndarray | None = None) -> np.ndarray:
    """Unchecked d/dx_l inv(gamma)_ij for a batch of points, analytic when the model provides d gamma"""
    if model.analytic_friction_grad is not None:
        gamma_inv = np.linalg.inv(model.friction(xs))
        dgamma = model.analytic_friction_grad(xs)
        return -np.einsum("ria,rabl,rbj->rijl", gamma_inv, dgamma, gamma_inv)

    if h is None:
        h = default_fd_step(xs)
    h = np.broadcast_to(np.asarray(h, dtype=float), xs.shape[:1])
    r, n = xs.shape
    result = np.empty((r, n, n, n))
    for l in range(n):
        shift = np.zeros_like(xs)
        shift[:, l] = h
        forward = np.linalg.inv(model.friction(xs + shift))
        backward = np.linalg.inv(model.friction(xs - shift))
        result[..., l] = (forward - backward) / (2.0 * h[:, None, None])
    return result


def grad_friction_inverse(model: Model, x, h: float | None = None, use_analytic: bool = True) -> np.ndarray:
    """Tensor d/dx_l inv(gamma)_ij, layout [i, j, l]"""
    xs, single = as_point_batch(x)
    distance = model.domain.boundary_distance(xs)
    analytic = use_analytic and model.analytic_friction_grad is not None
    if analytic:
        if np.any(distance <= 0.0):
            raise BoundaryTooCloseError("Point is outside of the open domain")
        friction_inverse(model.friction(xs))
        return unbatch(friction_inverse_gradient_batch(model, xs), single)

    step = default_fd_step(xs) if h is None else np.full(xs.shape[0], float(h))
    if np.any(distance <= step):
        raise BoundaryTooCloseError(f"Boundary distance {float(np.min(distance)):.3g} <= step {float(np.max(step)):.3g}")
    fd_model = model if model.analytic_friction_grad is None else dataclasses.replace(model, analytic_friction_grad=None)
    return unbatch(friction_inverse_gradient_batch(fd_model, xs, step), single)


def noise_induced_drift_batch(model: Model, xs: np.ndarray, h: np.ndarray | None = None) -> np.ndarray:
    """Unchecked S(x) for a batch of points"""
    gamma = model.friction(xs)
    sigma = model.diffusion(xs)
    q = sigma @ np.swapaxes(sigma, -1, -2)
    j = lyapunov_batch(gamma, q)
    dgamma_inv = friction_inverse_gradient_batch(model, xs, h)
    return np.einsum("rijl,rjl->ri", dgamma_inv, j)


def noise_induced_drift(model: Model, x, h: float | None = None) -> np.ndarray:
    """S_i = sum_jl d_l[inv(gamma)_ij] J_jl with J from solve_lyapunov at x"""
    xs, single = as_point_batch(x)
    dgamma_inv = grad_friction_inverse(model, xs, h=h)
    gamma = model.friction(xs)
    sigma = model.diffusion(xs)
    solution = solve_lyapunov(gamma, sigma @ np.swapaxes(sigma, -1, -2))
    drift = np.einsum("rijl,rjl->ri", dgamma_inv, solution.J)
    return unbatch(drift, single)
