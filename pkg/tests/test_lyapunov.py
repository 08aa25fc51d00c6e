import dataclasses

import numpy as np
import pytest
import scipy.linalg
import sympy

from core.exc import BoundaryTooCloseError, FrictionNotPositiveError, HorizonTooShortError, SingularSystemError
from core.lyapunov import (
    expm,
    friction_inverse,
    grad_friction_inverse,
    integral_lyapunov,
    noise_induced_drift,
    solve_lyapunov,
)
from core.models import (
    builtin_diffusion_model1,
    constant_benchmark,
    dlvo_pair_model,
    fd_constant_model,
    limiting_coefficients_batch,
    rotational_pore_model,
    wall_gravity_model,
)


def _random_friction(rng, n):
    # symmetric part >= I keeps |exp(-t gamma)| <= exp(-t)
    m = rng.normal(size=(n, n))
    skew = rng.normal(size=(n, n))
    return m @ m.T + np.eye(n) + 0.3 * (skew - skew.T)


def _random_psd(rng, n):
    a = rng.normal(size=(n, n))
    return a @ a.T


def _residual(gamma, q, j):
    return np.linalg.norm(gamma @ j + j @ gamma.T - q)


class TestSolveLyapunov:
    def test_scalar(self):
        result = solve_lyapunov(np.array([[2.0]]), np.array([[4.0]]))
        assert result.J == pytest.approx(np.array([[1.0]]), abs=1e-15)

    def test_commuting_identity(self):
        result = solve_lyapunov(3.0 * np.eye(2), np.eye(2))
        np.testing.assert_allclose(result.J, np.eye(2) / 6.0, atol=1e-15)

    def test_exact_rational_oracle(self):
        gamma = np.array([[2.0, 1.0], [0.0, 3.0]])
        q = np.array([[2.0, 0.0], [0.0, 2.0]])

        g = sympy.Matrix([[2, 1], [0, 3]])
        unknowns = sympy.symbols("j0:4")
        j = sympy.Matrix(2, 2, unknowns)
        equations = list(g * j + j * g.T - sympy.Matrix([[2, 0], [0, 2]]))
        solution = sympy.solve(equations, unknowns, rational=True)
        expected = np.array([[float(solution[unknowns[0]]), float(solution[unknowns[1]])], [float(solution[unknowns[2]]), float(solution[unknowns[3]])]])

        result = solve_lyapunov(gamma, q)
        np.testing.assert_allclose(result.J, expected, atol=1e-14)
        assert result.residual_norm <= 1e-12 * (1.0 + np.linalg.norm(q))

    def test_residual_random_instances(self):
        rng = np.random.default_rng(11)
        for trial in range(100):
            n = 1 + trial % 3
            gamma, q = _random_friction(rng, n), _random_psd(rng, n)
            result = solve_lyapunov(gamma, q)
            assert _residual(gamma, q, result.J) <= 1e-12 * (1.0 + np.linalg.norm(q))
            assert np.allclose(result.J, result.J.T)
            assert np.linalg.eigvalsh(result.J).min() >= -1e-12

    def test_batch_rows_match_single_solves(self):
        rng = np.random.default_rng(3)
        gammas = np.stack([_random_friction(rng, 3) for _ in range(5)])
        qs = np.stack([_random_psd(rng, 3) for _ in range(5)])
        batch = solve_lyapunov(gammas, qs)
        for i in range(5):
            np.testing.assert_allclose(batch.J[i], solve_lyapunov(gammas[i], qs[i]).J, rtol=1e-13, atol=1e-15)

    def test_not_positive_friction(self):
        with pytest.raises(FrictionNotPositiveError):
            solve_lyapunov(np.array([[1.0, 0.0], [0.0, -1.0]]), np.eye(2))

    def test_ill_conditioned_friction(self):
        with pytest.raises(SingularSystemError):
            solve_lyapunov(np.diag([1.0, 1e-15]), np.eye(2))

    def test_residual_above_tolerance(self, monkeypatch):
        monkeypatch.setattr("core.lyapunov.lyapunov_batch", lambda g, q: np.zeros_like(g))
        with pytest.raises(SingularSystemError, match="residual"):
            solve_lyapunov(np.eye(2), np.eye(2))


class TestIntegralLyapunov:
    def test_scalar_closed_form(self):
        result = integral_lyapunov(np.array([[2.0]]), np.array([[4.0]]), quadrature_horizon=20.0, step=0.1)
        assert result.J[0, 0] == pytest.approx(1.0, abs=1e-10)

    def test_identity(self):
        result = integral_lyapunov(np.eye(2), np.eye(2), quadrature_horizon=30.0, step=0.1)
        np.testing.assert_allclose(result.J, np.eye(2) / 2.0, atol=1e-10)

    def test_agrees_with_vectorized_solve(self):
        rng = np.random.default_rng(5)
        for trial in range(100):
            n = 1 + trial % 3
            gamma, q = _random_friction(rng, n), _random_psd(rng, n)
            oracle = integral_lyapunov(gamma, q, quadrature_horizon=30.0, step=0.1)
            direct = solve_lyapunov(gamma, q)
            assert np.linalg.norm(oracle.J - direct.J) <= 1e-8

    def test_horizon_too_short(self):
        with pytest.raises(HorizonTooShortError):
            integral_lyapunov(np.eye(2), np.eye(2), quadrature_horizon=1.0, step=0.1)


class TestExpm:
    @pytest.mark.parametrize("scale", [1e-3, 1.0, 5.0])
    def test_matches_scipy(self, scale):
        rng = np.random.default_rng(7)
        mats = scale * rng.normal(size=(20, 3, 3))
        result = expm(mats)
        for mat, value in zip(mats, result, strict=True):
            expected = scipy.linalg.expm(mat)
            np.testing.assert_allclose(value, expected, rtol=1e-9, atol=1e-12 * np.abs(expected).max())

    def test_single_matrix(self):
        np.testing.assert_allclose(expm(np.zeros((2, 2))), np.eye(2))
        assert expm(np.array([[np.log(3.0)]]))[0, 0] == pytest.approx(3.0, rel=1e-14)

    def test_batch_rows_independent(self):
        mats = np.stack([np.diag([-1.0, -2.0]), 100.0 * np.array([[0.0, 1.0], [-1.0, 0.0]])])
        np.testing.assert_allclose(expm(mats)[0], expm(mats[0]), rtol=1e-14)


class TestFrictionInverse:
    def test_scalar(self):
        assert friction_inverse(np.array([[2.0]]))[0, 0] == 0.5

    def test_diagonal(self):
        np.testing.assert_allclose(friction_inverse(np.diag([2.0, 5.0])), np.diag([0.5, 0.2]))

    def test_adjugate_oracle(self):
        gamma = np.array([[3.0, 1.0], [-0.5, 2.0]])
        det = 3.0 * 2.0 - 1.0 * -0.5
        expected = np.array([[2.0, -1.0], [0.5, 3.0]]) / det
        result = friction_inverse(gamma)
        np.testing.assert_allclose(result, expected, atol=1e-15)
        np.testing.assert_allclose(gamma @ result, np.eye(2), atol=1e-12)

    def test_singular(self):
        with pytest.raises(SingularSystemError):
            friction_inverse(np.array([[1.0, 1.0], [1.0, 1.0]]))


class TestGradFrictionInverse:
    def test_constant_friction_is_zero(self):
        model = constant_benchmark(n=2, g=3.0)
        np.testing.assert_array_equal(grad_friction_inverse(model, np.array([0.2, -0.1])), np.zeros((2, 2, 2)))

    def test_one_dimensional_fluctuation_dissipation(self):
        model = wall_gravity_model(kBT=2.0)
        profile = builtin_diffusion_model1(kBT=2.0)
        for x in (0.1, 0.37, 0.8):
            value = grad_friction_inverse(model, np.array([x]))
            assert value.shape == (1, 1, 1)
            assert value[0, 0, 0] == pytest.approx(profile.D_prime(x) / 2.0, rel=1e-12)

    def test_model1_midpoint_vanishes(self):
        model = wall_gravity_model(a=0.5, b=2.5)
        assert abs(grad_friction_inverse(model, np.array([1.5]))[0, 0, 0]) < 1e-12

    def test_finite_differences_match_analytic(self):
        model = dlvo_pair_model()
        x = np.array([-0.3, 0.4])
        analytic = grad_friction_inverse(model, x)
        numeric = grad_friction_inverse(model, x, use_analytic=False)
        np.testing.assert_allclose(numeric, analytic, atol=1e-8)

    def test_finite_differences_second_order(self):
        model = wall_gravity_model()
        x = np.array([0.3])
        analytic = grad_friction_inverse(model, x)[0, 0, 0]
        coarse = abs(grad_friction_inverse(model, x, h=1e-2, use_analytic=False)[0, 0, 0] - analytic)
        fine = abs(grad_friction_inverse(model, x, h=5e-3, use_analytic=False)[0, 0, 0] - analytic)
        assert 3.0 < coarse / fine < 5.0

    def test_boundary_too_close(self):
        model = wall_gravity_model()
        with pytest.raises(BoundaryTooCloseError):
            grad_friction_inverse(model, np.array([1e-6]), h=1e-5, use_analytic=False)

    def test_outside_domain(self):
        with pytest.raises(BoundaryTooCloseError):
            grad_friction_inverse(wall_gravity_model(), np.array([1.5]))


class TestNoiseInducedDrift:
    def test_model1_equals_d_prime(self):
        model = wall_gravity_model()
        xs = model.domain.sample_interior(np.random.default_rng(0), 1000, margin=1e-3)
        drift = noise_induced_drift(model, xs)
        np.testing.assert_allclose(drift[:, 0], model.profile.D_prime(xs[:, 0]), atol=1e-6)

    def test_model1_finite_difference_path(self):
        model = wall_gravity_model()
        x = np.array([0.3])
        h = 1e-3
        expected = model.profile.D_prime(0.3)
        fd_drift = noise_induced_drift(dataclasses.replace(model, analytic_friction_grad=None), x, h=h)
        assert fd_drift[0] == pytest.approx(expected, abs=1e-4)

    def test_model2_opposite_signs(self):
        model = dlvo_pair_model()
        xs = model.domain.sample_interior(np.random.default_rng(1), 1000, margin=1e-3)
        d_prime = model.profile.D_prime(xs[:, 1] - xs[:, 0])
        drift = noise_induced_drift(model, xs)
        np.testing.assert_allclose(drift[:, 0], -d_prime, atol=1e-6)
        np.testing.assert_allclose(drift[:, 1], d_prime, atol=1e-6)

    def test_model3_radial(self):
        model = rotational_pore_model()
        xs = model.domain.sample_interior(np.random.default_rng(2), 1000, margin=1e-3)
        r2 = np.sum(xs * xs, axis=-1)
        expected = 2.0 * xs * model.profile.D_prime(r2)[:, None]
        np.testing.assert_allclose(noise_induced_drift(model, xs), expected, atol=1e-6)

    def test_constant_friction_no_drift(self):
        model = fd_constant_model(n=2)
        np.testing.assert_allclose(noise_induced_drift(model, np.array([0.4, -1.0])), np.zeros(2), atol=1e-15)


@pytest.mark.parametrize("factory", [wall_gravity_model, dlvo_pair_model, rotational_pore_model])
def test_scalar_limiting_coefficients_match_generic_pipeline(factory):
    model = factory()
    generic = dataclasses.replace(model, scalar_coefficients=None)
    xs = model.domain.sample_interior(np.random.default_rng(4), 200, margin=1e-2)
    drift, diffusion = limiting_coefficients_batch(model, xs)
    generic_drift, generic_diffusion = limiting_coefficients_batch(generic, xs)
    np.testing.assert_allclose(drift, generic_drift, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(diffusion, generic_diffusion, rtol=1e-12)
