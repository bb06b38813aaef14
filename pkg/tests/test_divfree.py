"""Unit tests for core/divfree.py: discrete curl, Poisson correction, extensions and flow maps."""
import numpy as np
import pytest
from scipy.linalg import expm

from iqclab.core.divfree import (
    AffineVelocity,
    GridVelocity,
    NonZeroMeanDivergenceError,
    NotSolenoidalError,
    SeriesVelocity,
    StepOutOfDomainError,
    bogovskii_correct,
    discrete_curl,
    discrete_div,
    extend_solenoidal,
    flow_map,
    flow_points,
    potential_shape,
    random_series,
    random_solenoidal,
    sample_field,
    sample_series,
)
from iqclab.core.densities import fitted_order
from iqclab.core.errors import ValidationFailure
from iqclab.models.grid_models import GridField, GridFieldError


def _free_curl(rng, n, m):
    count = 3 if n == 3 else 1
    potential = [rng.standard_normal(potential_shape(n, m, k)) for k in range(count)]
    return discrete_curl(potential, m, dirichlet="none")


def _perturb_interior(field, rng, size=0.1):
    comps = []
    for axis, comp in enumerate(field.components):
        noise = size * rng.standard_normal(comp.shape)
        edge = [slice(None)] * field.n
        edge[axis] = [0, field.m]
        noise[tuple(edge)] = 0.0
        comps.append(comp + noise)
    return field.replace(comps)


class TestGridField:
    def test_masked_faces_must_be_zero(self):
        comps = [np.ones((5, 4)), np.zeros((4, 5))]
        with pytest.raises(GridFieldError):
            GridField(n=2, m=4, components=comps, dirichlet="all")

    def test_layout_is_checked(self):
        with pytest.raises(GridFieldError):
            GridField(n=2, m=4, components=[np.zeros((4, 4)), np.zeros((4, 5))], dirichlet="none")

    def test_unknown_face(self):
        with pytest.raises(GridFieldError):
            GridField.zeros(2, 4, dirichlet=["z-"])


class TestDiscreteCurl:
    @pytest.mark.parametrize("n", [2, 3])
    def test_divergence_free(self, rng, n):
        assert np.max(np.abs(discrete_div(_free_curl(rng, n, 6)))) < 1e-10

    def test_rejects_wrong_shapes(self):
        with pytest.raises(ValidationFailure):
            discrete_curl([np.zeros((4, 4, 4))] * 3, 4)

    def test_affine_sample(self):
        A = np.array([[1.0, 2.0, 0.0], [0.5, -0.4, 0.0], [0.0, 1.0, -0.6]])
        field = sample_field(lambda x: x @ A.T, 3, 4)
        assert np.allclose(discrete_div(field), 0.0, atol=1e-12)

    def test_series_sample_is_masked_and_solenoidal(self):
        field = sample_series(random_series(3, modes=3, seed=2), 6)
        assert field.dirichlet == frozenset(["x-", "x+", "y-", "y+", "z-", "z+"])
        assert np.max(np.abs(discrete_div(field))) < 1e-10

    def test_random_solenoidal_needs_m(self):
        with pytest.raises(ValidationFailure):
            random_solenoidal(3, 3)

    def test_random_solenoidal_seeded(self):
        first = random_solenoidal(2, 8, seed=4)
        second = random_solenoidal(2, 8, seed=4)
        assert all(np.array_equal(a, b) for a, b in zip(first.components, second.components))

    def test_smoothness_moves_energy_to_low_modes(self):
        fractions = [random_series(3, modes=4, smoothness=s, seed=0).low_mode_fraction(1) for s in (0.0, 1.0, 2.0)]
        assert fractions[0] < fractions[1] < fractions[2] <= 1.0

    def test_single_mode_series_is_all_low(self):
        assert random_series(2, modes=1, seed=3).low_mode_fraction(1) == 1.0


class TestBogovskii:
    def test_removes_divergence(self, rng):
        f = _perturb_interior(random_solenoidal(3, 8, seed=1), rng)
        result = bogovskii_correct(f)
        assert result.max_divergence < 1e-8
        assert result.divergence_norm > 0.0
        assert np.isfinite(result.ratio)
        for axis, (old, new) in enumerate(zip(f.components, result.field.components)):
            assert np.array_equal(np.take(old, [0, 8], axis=axis), np.take(new, [0, 8], axis=axis))

    def test_one_constant_bounds_every_correction(self, rng):
        ratios = []
        for seed in range(20):
            result = bogovskii_correct(_perturb_interior(random_solenoidal(3, 16, seed=seed), rng))
            assert result.max_divergence <= 1e-8
            ratios.append(result.ratio)
        assert 0.0 < max(ratios) <= 20.0

    def test_solenoidal_input_is_left_alone(self):
        f = random_solenoidal(2, 8, seed=3)
        result = bogovskii_correct(f)
        assert result.correction_norm == 0.0
        assert result.ratio == 0.0

    def test_rejects_net_divergence(self):
        f = GridField.zeros(2, 4, dirichlet="none")
        comps = [np.array(c) for c in f.components]
        comps[0][0, 1] = 1.0
        with pytest.raises(NonZeroMeanDivergenceError):
            bogovskii_correct(f.replace(comps))

    def test_active_mask_shape(self):
        with pytest.raises(ValidationFailure):
            bogovskii_correct(GridField.zeros(2, 4), active=np.ones((3, 3), dtype=bool))


class TestExtension:
    def test_extends_free_field(self, rng):
        f = _free_curl(rng, 3, 4)
        g = extend_solenoidal(f, 8)
        assert g.m == 8
        assert np.max(np.abs(discrete_div(g))) < 1e-8
        assert np.allclose(g.origin, (-0.5, -0.5, -0.5))
        for axis, (inner, outer) in enumerate(zip(f.components, g.components)):
            block = tuple(slice(2, 7) if a == axis else slice(2, 6) for a in range(3))
            assert np.array_equal(outer[block], inner)

    def test_outer_boundary_vanishes(self, rng):
        g = extend_solenoidal(_free_curl(rng, 2, 4), 8)
        assert g.dirichlet == frozenset(["x-", "x+", "y-", "y+"])

    def test_rejects_odd_padding(self, rng):
        with pytest.raises(ValidationFailure):
            extend_solenoidal(_free_curl(rng, 2, 4), 7)

    def test_rejects_divergent_field(self, rng):
        f = _perturb_interior(random_solenoidal(2, 8, seed=1), rng)
        with pytest.raises(NotSolenoidalError):
            extend_solenoidal(f, 12)


class TestFlow:
    def test_affine_flow_is_the_exponential(self):
        A = np.array([[0.2, 1.0, 0.0], [-0.5, 0.1, 0.3], [0.0, 0.4, -0.3]])
        points = np.array([[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]])
        y = flow_points(AffineVelocity(A), points, 0.5, 16)
        assert np.allclose(y, points @ expm(0.5 * A).T, atol=1e-8)

    def test_series_flow_preserves_volume(self):
        velocity = SeriesVelocity(random_series(3, modes=3, seed=5))
        result = flow_map(velocity, eps=0.1, steps=32, m=8)
        assert result.det_residual < 1e-6
        assert result.residual_source == "tangent"
        assert result.displacement.shape == (9, 9, 9, 3)
        assert np.allclose(result.u_eps, result.displacement / 0.1)

    def test_boundary_nodes_stay_put(self):
        result = flow_map(SeriesVelocity(random_series(2, modes=3, seed=6)), eps=0.2, steps=16, m=8)
        assert np.allclose(result.displacement[0], 0.0, atol=1e-12)
        assert np.allclose(result.displacement[:, -1], 0.0, atol=1e-12)

    def test_fourth_order_in_the_step(self):
        # large amplitude so that |grad u| is of order one
        velocity = SeriesVelocity(random_series(3, modes=2, seed=7, amplitude=3000.0))
        coarse = flow_map(velocity, eps=1.0, steps=16, m=4).det_residual
        fine = flow_map(velocity, eps=1.0, steps=32, m=4).det_residual
        assert coarse > 1e-12
        assert fine < coarse / 12.0

    def test_backward_flow_returns_to_the_start(self, rng):
        velocity = SeriesVelocity(random_series(3, modes=3, seed=11))
        points = rng.uniform(0.05, 0.95, (20, 3))
        there = flow_points(velocity, points, 0.2, 32)
        back = flow_points(velocity, there, -0.2, 32)
        assert np.max(np.abs(there - points)) > 1e-6
        assert np.allclose(back, points, rtol=0.0, atol=1e-8)

    def test_rigid_rotation(self):
        A = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        result = flow_map(AffineVelocity(A), eps=0.5, steps=64, m=4)
        assert result.residual_source == "tangent"
        assert result.det_residual <= 1e-10
        assert result.det_residual_central <= 1e-10
        mapped = result.nodes + result.displacement
        assert np.allclose(mapped, result.nodes @ expm(0.5 * A).T, rtol=0.0, atol=1e-10)

    def test_shear_is_integrated_exactly(self):
        A = np.zeros((3, 3))
        A[0, 1] = 1.0
        result = flow_map(AffineVelocity(A), eps=0.3, steps=8, m=4)
        expected = np.zeros_like(result.displacement)
        expected[..., 0] = 0.3 * result.nodes[..., 1]
        assert np.allclose(result.displacement, expected, rtol=0.0, atol=1e-14)
        assert result.det_residual <= 1e-14

    def test_needs_enough_steps(self):
        with pytest.raises(ValidationFailure):
            flow_map(AffineVelocity(np.zeros((2, 2))), eps=0.1, steps=2)

    def test_grid_velocity(self):
        result = flow_map(GridVelocity(random_solenoidal(2, 8, seed=8)), eps=0.1, steps=8)
        assert result.nodes.shape == (9, 9, 2)
        assert result.det_residual == result.det_residual_central
        assert result.residual_source == "central"

    def test_grid_velocity_residual_shrinks_with_the_mesh(self):
        series = random_series(2, modes=3, seed=12)
        meshes = (8, 16, 32)
        residuals = [
            flow_map(GridVelocity(sample_series(series, m)), eps=0.1, steps=32).det_residual for m in meshes
        ]
        widths = [1.0 / m for m in meshes]
        assert residuals[2] < residuals[1] < residuals[0]
        assert fitted_order(widths, residuals) >= 0.5

    def test_grid_velocity_pads_with_the_edge_value(self):
        field = random_solenoidal(2, 8, seed=9)
        velocity = GridVelocity(field)
        wall, _ = velocity(np.array([[0.3, 0.0]]))
        centre, _ = velocity(np.array([[0.3, 0.5 / 8]]))
        assert wall[0, 0] == pytest.approx(centre[0, 0], abs=1e-15)
        assert wall[0, 1] == 0.0

    def test_grid_velocity_outside_the_box(self):
        velocity = GridVelocity(random_solenoidal(2, 8, seed=8))
        with pytest.raises(StepOutOfDomainError):
            velocity(np.array([[1.5, 0.5]]))
