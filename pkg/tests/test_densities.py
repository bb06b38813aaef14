"""Unit tests for core/densities.py: W_eps, V_eps, V, Q by finite differences and condition (C)."""
import math

import numpy as np
import pytest

from iqclab.core.densities import (
    MissingQError,
    NotDeviatoricError,
    StepOutOfRangeError,
    check_condition_C,
    dev_basis,
    eval_Q_fd,
    eval_V,
    eval_V_eps,
    eval_W,
    fitted_order,
    growth_constants,
    nematic_lower_bound,
    newton_polar,
    sample_dev_ball,
)
from iqclab.core.errors import ValidationFailure
from iqclab.core.matcore import dist_SO, fro_norm, matrix_exp, polar_decompose, project_ils, random_rotations
from iqclab.models.density_models import DensityModelError, MultiWell, Nematic, SingleWell, Well

from .conftest import random_traceless_symmetric


def _random_sl3(rng, count):
    Z = 0.5 * rng.standard_normal((count, 3, 3))
    Z -= np.trace(Z, axis1=-2, axis2=-1)[:, None, None] / 3.0 * np.eye(3)
    return matrix_exp(Z)


class TestModels:
    def test_rho_must_be_sorted(self):
        with pytest.raises(DensityModelError):
            Nematic(rho=np.array([1.0, 0.0, -1.0]))

    def test_rho_must_sum_to_zero(self):
        with pytest.raises(DensityModelError):
            Nematic(rho=np.array([-1.0, 0.0, 2.0]))

    def test_well_needs_spd(self):
        with pytest.raises(DensityModelError):
            Well(a=np.diag([1.0, -1.0, 1.0]), U=np.zeros((3, 3)))

    def test_well_needs_traceless(self):
        with pytest.raises(DensityModelError):
            Well(a=np.eye(3), U=np.eye(3))

    def test_rho_correction_path(self):
        model = Nematic(rho=np.array([-1.0, 0.0, 1.0]), rho_correction=np.array([1.0, 0.0, -1.0]))
        assert np.allclose(model.rho_at(0.1), [-0.9, 0.0, 0.9])
        assert np.isclose(np.prod(model.gamma_at(0.1)), 1.0)


class TestEvalW:
    def test_nematic_zero_at_preferred_stretch(self, nematic):
        eps = 0.1
        assert abs(eval_W(nematic, eps, np.diag(nematic.gamma_at(eps)))) < 1e-12

    def test_nematic_isotropic_identity(self):
        assert abs(eval_W(Nematic(rho=np.zeros(3)), 0.3, np.eye(3))) < 1e-12

    def test_nematic_identity_value(self, nematic):
        expected = math.exp(0.2) + 1.0 + math.exp(-0.2) - 3.0
        assert eval_W(nematic, 0.1, np.eye(3)) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.0401, abs=1e-4)

    def test_infinite_off_sl(self, models):
        for model in models:
            assert eval_W(model, 0.1, 1.1 * np.eye(3)) == math.inf

    def test_batched(self, nematic, rng):
        X = _random_sl3(rng, 5)
        values = eval_W(nematic, 0.1, X)
        assert values.shape == (5,)
        assert np.all(np.isfinite(values))

    def test_frame_indifference(self, models, rng):
        X = _random_sl3(rng, 1)[0]
        R = random_rotations(100, 3, rng)
        for model in models:
            reference = eval_W(model, 0.1, X)
            rotated = eval_W(model, 0.1, R @ X)
            assert np.max(np.abs(rotated - reference)) < 1e-9

    def test_nematic_lower_bound(self, nematic, rng):
        eps = 0.1
        X = _random_sl3(rng, 10_000)
        c, C = nematic_lower_bound(nematic, eps)
        assert np.all(eval_W(nematic, eps, X) >= c * dist_SO(X) ** 2 - C - 1e-12)
        assert C <= 2.0 * eps ** 2 * np.sum(nematic.rho ** 2)


class TestEvalVeps:
    def test_nematic_at_zero_tends_to_four(self, nematic):
        assert eval_V_eps(nematic, 1e-3, np.zeros((3, 3))) == pytest.approx(4.0, abs=1e-2)

    def test_single_well_tends_to_norm_squared(self, single_well):
        Z = np.diag([0.3, -0.3, 0.0])
        assert eval_V_eps(single_well, 1e-3, Z) == pytest.approx(float(fro_norm(Z)) ** 2, rel=1e-3)

    def test_isotropic_nematic(self):
        Z = np.diag([1.0, -1.0, 0.0])
        assert eval_V_eps(Nematic(rho=np.zeros(3)), 1e-3, Z) == pytest.approx(4.0, abs=1e-2)

    def test_rejects_trace(self, nematic):
        with pytest.raises(NotDeviatoricError):
            eval_V_eps(nematic, 0.1, np.eye(3))

    def test_rejects_large_eps(self, nematic):
        with pytest.raises(ValidationFailure):
            eval_V_eps(nematic, 1.5, np.zeros((3, 3)))


class TestEvalV:
    def test_nematic_at_well(self, nematic):
        assert eval_V(nematic, np.diag([-1.0, 0.0, 1.0])) == pytest.approx(0.0)

    def test_nematic_value(self, nematic):
        assert eval_V(nematic, np.diag([-2.0, 0.0, 2.0])) == pytest.approx(4.0)

    def test_one_well(self, one_well, rng):
        Z = random_traceless_symmetric(rng, 1)[0]
        assert eval_V(one_well, Z) == pytest.approx(0.5 * float(fro_norm(Z)) ** 2)

    def test_infinite_with_trace(self, models):
        for model in models:
            assert eval_V(model, np.eye(3)) == math.inf

    def test_antisymmetric_part_ignored(self, models, rng):
        Z = random_traceless_symmetric(rng, 4)
        A = rng.standard_normal((4, 3, 3))
        skew = A - np.swapaxes(A, -1, -2)
        for model in models:
            assert np.allclose(eval_V(model, Z + skew), eval_V(model, Z))

    def test_nematic_growth(self, nematic, rng):
        alpha, beta = growth_constants(nematic)
        Z = random_traceless_symmetric(rng, 2000, scale=3.0)
        V = eval_V(nematic, Z)
        norm2 = fro_norm(Z) ** 2
        assert np.all(alpha * fro_norm(project_ils(Z)) ** 2 - beta <= V + 1e-12)
        assert np.all(V <= beta * norm2 + beta)

    def test_nematic_local_lipschitz(self, nematic, rng):
        _, beta = growth_constants(nematic)
        Z = random_traceless_symmetric(rng, 500)
        W = random_traceless_symmetric(rng, 500)
        Z *= (5.0 * rng.random(500) / fro_norm(Z))[:, None, None]
        W *= (5.0 * rng.random(500) / fro_norm(W))[:, None, None]
        lhs = np.abs(eval_V(nematic, Z) - eval_V(nematic, W))
        rhs = beta * (1.0 + fro_norm(Z) + fro_norm(W)) * fro_norm(Z - W)
        assert np.all(lhs <= rhs + 1e-12)

    def test_missing_q(self):
        model = SingleWell(name="opaque", W_fn=lambda X: np.zeros(X.shape[:-2]), allow_fd=False)
        with pytest.raises(MissingQError):
            eval_V(model, np.zeros((3, 3)))


class TestEvalQfd:
    def test_dist2_on_traceless_diagonal(self, single_well):
        # W(exp(tZ)) = (e^t - 1)^2 + (e^-t - 1)^2, whose second derivative at 0 is 4
        assert eval_Q_fd(single_well, np.diag([1.0, -1.0, 0.0])) == pytest.approx(4.0, abs=1e-4)

    def test_zero(self, single_well):
        assert eval_Q_fd(single_well, np.zeros((3, 3))) == pytest.approx(0.0, abs=1e-10)

    def test_matches_closed_form(self, single_well, rng):
        Z = random_traceless_symmetric(rng, 1, scale=0.5)[0]
        assert eval_Q_fd(single_well, Z) == pytest.approx(float(single_well.Q_form(Z)), rel=1e-4)

    def test_step_range(self, single_well):
        with pytest.raises(StepOutOfRangeError):
            eval_Q_fd(single_well, np.diag([1.0, -1.0, 0.0]), t=0.1)

    def test_fallback_for_models_without_q(self):
        W = lambda X: np.sum((np.linalg.svd(X, compute_uv=False) - 1.0) ** 2, axis=-1)  # noqa: E731
        model = SingleWell(name="plain", W_fn=W)
        Z = np.diag([0.5, -0.5, 0.0])
        assert eval_V(model, Z) == pytest.approx(float(fro_norm(Z)) ** 2, rel=1e-4)


class TestConditionC:
    def test_dev_basis_orthonormal(self):
        B = dev_basis(3).reshape(8, 9)
        assert np.allclose(B @ B.T, np.eye(8))

    def test_samples_stay_in_ball(self):
        Z = sample_dev_ball(3, 2.0, 1024, seed=3)
        assert np.all(fro_norm(Z) <= 2.0 + 1e-12)
        assert np.allclose(np.trace(Z, axis1=-2, axis2=-1), 0.0)

    def test_nematic_first_order(self, nematic):
        table = check_condition_C(nematic, r=2.0, eps_list=(0.1, 0.05, 0.025), samples=1000, seed=0)
        ratios = table["ratio"].iloc[1:]
        assert np.all((ratios >= 1.5) & (ratios <= 2.5))
        assert fitted_order(table["eps"], table["sup_deviation"]) == pytest.approx(1.0, abs=0.3)

    def test_isotropic_bound(self):
        table = check_condition_C(Nematic(rho=np.zeros(3)), r=1.0, eps_list=(0.1, 0.05), samples=1000, seed=1)
        assert np.all(table["sup_deviation"] <= 10.0 * table["eps"])

    def test_radius_zero(self, nematic):
        table = check_condition_C(nematic, r=0.0, eps_list=(0.1,), samples=1000)
        expected = abs(eval_V_eps(nematic, 0.1, np.zeros((3, 3))) - 4.0)
        assert table["sup_deviation"].iloc[0] == pytest.approx(expected)

    def test_deterministic(self, nematic):
        first = check_condition_C(nematic, r=1.0, eps_list=(0.1,), samples=1000, seed=5)
        second = check_condition_C(nematic, r=1.0, eps_list=(0.1,), samples=1000, seed=5)
        assert first.equals(second)

    def test_needs_enough_samples(self, nematic):
        with pytest.raises(ValidationFailure):
            check_condition_C(nematic, samples=10)


class TestFittedOrder:
    def test_linear(self):
        eps = np.array([0.1, 0.05, 0.025])
        assert fitted_order(eps, 3.0 * eps) == pytest.approx(1.0)

    def test_too_few_points(self):
        assert math.isnan(fitted_order([0.1, 0.05], [1e-20, 1e-20]))



class TestNewtonPolar:
    def test_matches_polar_decomposition(self, rng):
        F = _random_sl3(rng, 10)
        R = np.asarray(newton_polar(F))
        for k in range(len(F)):
            assert np.allclose(R[k], polar_decompose(F[k])[0], atol=1e-10)

    def test_rotation_is_fixed(self, rng):
        Q = random_rotations(4, 3, rng)
        assert np.allclose(np.asarray(newton_polar(Q)), Q, atol=1e-12)

    def test_single_well_jax_form_matches_numpy(self, single_well, rng):
        F = _random_sl3(rng, 10)
        assert np.allclose(np.asarray(single_well.W_jax(F)), single_well.W_fn(F), atol=1e-10)
