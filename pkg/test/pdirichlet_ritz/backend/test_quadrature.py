import math

import numpy as np
import pytest

from pdirichlet_ritz.backend.models import (
    DiskGridConfig,
    RandomParameterGridConfig,
    TensorGridConfig,
    VariableDomainGridConfig,
)
from pdirichlet_ritz.backend.quadrature import (
    QuadratureSet,
    boundary_grid_1d,
    disk_grid,
    grid_from_config,
    half_width_domain,
    midpoints,
    random_parameter_grid,
    slice_grid,
    tensor_grid,
    variable_domain_grid,
)


class TestTensorGrid:
    def test_parameter_space_grid_size(self):
        """(0,6,100) × (−1,1,1000) → 100000 点，权重 12/100000"""
        quad = tensor_grid([(0.0, 6.0, 100), (-1.0, 1.0, 1000)])
        assert quad.size == 100000
        assert quad.dim == 2
        assert quad.weight == pytest.approx(12.0 / 100000, rel=1e-15)
        assert quad.integrate(np.ones(quad.size)) == pytest.approx(12.0, rel=1e-12)

    def test_single_cell(self):
        quad = tensor_grid([(0.0, 1.0, 1)])
        np.testing.assert_array_equal(quad.points, [[0.5]])
        assert quad.weight == 1.0

    def test_four_midpoints(self):
        quad = tensor_grid([(-1.0, 1.0, 4)])
        np.testing.assert_allclose(quad.points[:, 0], [-0.75, -0.25, 0.25, 0.75], rtol=0, atol=1e-15)
        assert quad.weight == 0.5

    def test_no_point_on_the_boundary(self):
        quad = tensor_grid([(-1.0, 1.0, 7), (0.0, 2.0, 5)])
        assert np.all(np.abs(quad.points[:, 0]) < 1.0)
        assert np.all((quad.points[:, 1] > 0.0) & (quad.points[:, 1] < 2.0))

    def test_first_axis_varies_slowest(self):
        quad = tensor_grid([(0.0, 2.0, 2), (0.0, 3.0, 3)])
        np.testing.assert_array_equal(quad.points[:3, 0], [0.5, 0.5, 0.5])
        np.testing.assert_array_equal(quad.points[:3, 1], [0.5, 1.5, 2.5])

    def test_odd_function_integrates_to_zero(self):
        quad = tensor_grid([(-1.0, 1.0, 101)])
        assert abs(quad.integrate(quad.points[:, 0])) <= 1e-15

    def test_midpoint_rule_is_second_order(self):
        """∫₀^π sin = 2，误差随 n⁻² 下降"""
        errors = []
        for n in (20, 40, 80):
            quad = tensor_grid([(0.0, math.pi, n)])
            errors.append(abs(quad.integrate(np.sin(quad.points[:, 0])) - 2.0))
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(orders > 1.9)

    @pytest.mark.parametrize("axes", [[], [(1.0, 0.0, 4)], [(0.0, 1.0, 0)]])
    def test_invalid_axes(self, axes):
        with pytest.raises(ValueError):
            tensor_grid(axes)


class TestVariableDomainGrid:
    def test_two_slices(self):
        """p ∈ {1.25, 1.75}，每片 4 个点，关于 0 对称"""
        quad = variable_domain_grid((1.0, 2.0, 2), lambda p: 4, lambda p: (-p, p))
        assert quad.size == 8
        assert quad.slice_sizes == (4, 4)
        np.testing.assert_array_equal(np.unique(quad.points[:, 0]), [1.25, 1.75])
        for p in (1.25, 1.75):
            xs = quad.points[quad.points[:, 0] == p, 1]
            np.testing.assert_allclose(np.sort(xs), -np.sort(xs)[::-1], rtol=0, atol=1e-15)
            assert np.all(np.abs(xs) < p)
        assert quad.total_measure == pytest.approx(0.5 * 2.5 + 0.5 * 3.5)

    def test_one_point_per_slice_is_the_midpoint(self):
        quad = variable_domain_grid((1.0, 2.0, 3), lambda p: 1, lambda p: (-p, p))
        np.testing.assert_allclose(quad.points[:, 1], 0.0, atol=1e-15)

    def test_points_follow_the_count_expression(self):
        quad = variable_domain_grid((1.0, 2.0, 2), lambda p: 8 * p, lambda p: (-p, p))
        assert quad.slice_sizes == (10, 14)

    def test_empty_slice_is_rejected(self):
        with pytest.raises(ValueError):
            variable_domain_grid((1.0, 2.0, 2), lambda p: 0.2, lambda p: (-p, p))


class TestRandomParameterGrid:
    def test_size_is_product(self):
        """25 个参数样本 × 圆盘 n=85 的 5625 个内点"""
        spatial = QuadratureSet.uniform(np.zeros((5625, 2)), math.pi)
        quad = random_parameter_grid([(0.0, 1.0)] * 5, 25, spatial, seed=0)
        assert quad.size == 140625
        assert quad.dim == 7
        assert quad.slice_sizes == (5625,) * 25

    def test_same_seed_same_points(self):
        spatial = disk_grid(1.0, 6)
        box = [(1.0, 2.0), (-1.0, 1.0)]
        first = random_parameter_grid(box, 4, spatial, seed=7)
        second = random_parameter_grid(box, 4, spatial, seed=7)
        np.testing.assert_array_equal(first.points, second.points)
        other = random_parameter_grid(box, 4, spatial, seed=8)
        assert np.any(first.points != other.points)

    def test_parameters_inside_the_box(self):
        quad = random_parameter_grid([(1.0, 2.0), (-3.0, -2.0)], 50, disk_grid(1.0, 4), seed=1)
        assert np.all((quad.points[:, 0] >= 1.0) & (quad.points[:, 0] <= 2.0))
        assert np.all((quad.points[:, 1] >= -3.0) & (quad.points[:, 1] <= -2.0))
        assert quad.total_measure == pytest.approx(math.pi)

    def test_needs_interior_spatial_set(self):
        with pytest.raises(ValueError):
            random_parameter_grid([(0.0, 1.0)], 2, boundary_grid_1d((-1.0, 1.0)), seed=0)

    def test_resampler_redraws_parameters(self):
        cfg = RandomParameterGridConfig(
            kind="random_parameter",
            parameter_box=[(0.0, 1.0), (0.0, 1.0)],
            n_parameters=3,
            spatial=DiskGridConfig(kind="disk", radius=1.0, n_per_axis=4),
        )
        first, resample = grid_from_config(cfg, seed=3)
        np.testing.assert_array_equal(resample(0).points, first.points)
        assert np.any(resample(1).points[:, :2] != first.points[:, :2])
        np.testing.assert_array_equal(resample(1).points, resample(1).points)


class TestDiskGrid:
    def test_single_cell_keeps_the_origin(self):
        quad = disk_grid(1.0, 1)
        np.testing.assert_array_equal(quad.points, [[0.0, 0.0]])
        assert quad.weight == pytest.approx(math.pi)

    def test_weights_sum_to_area(self):
        quad = disk_grid(2.0, 40)
        assert quad.integrate(np.ones(quad.size)) == pytest.approx(4.0 * math.pi, rel=1e-12)
        assert np.all(np.sum(quad.points ** 2, axis=1) < 4.0)

    def test_radius_must_be_positive(self):
        with pytest.raises(ValueError):
            disk_grid(0.0, 10)


class TestBoundaryAndSlices:
    def test_boundary_is_counting_measure(self):
        quad = boundary_grid_1d((-1.0, 1.0))
        assert quad.boundary
        np.testing.assert_array_equal(quad.points[:, 0], [-1.0, 1.0])
        assert quad.weight == 1.0
        assert quad.total_measure == 2.0
        assert quad.integrate([3.0, 4.0]) == 7.0

    def test_boundary_needs_ordered_ends(self):
        with pytest.raises(ValueError):
            boundary_grid_1d((1.0, 1.0))

    def test_slice_keeps_spatial_weight(self):
        spatial = tensor_grid([(-1.0, 1.0, 10)])
        quad = slice_grid([2.5], spatial)
        assert quad.weight == spatial.weight
        np.testing.assert_array_equal(quad.points[:, 0], np.full(10, 2.5))
        np.testing.assert_array_equal(quad.points[:, 1], spatial.points[:, 0])

    def test_points_are_read_only(self):
        quad = tensor_grid([(0.0, 1.0, 3)])
        with pytest.raises(ValueError):
            quad.points[0, 0] = 9.0

    def test_summary(self):
        summary = tensor_grid([(0.0, 1.0, 3)]).summary()
        assert summary["points"] == 3
        assert summary["boundary"] is False


class TestFromConfig:
    def test_tensor_config(self):
        quad, resample = grid_from_config(TensorGridConfig(kind="tensor", axes=[(0.0, 6.0, 10), (-1.0, 1.0, 20)]))
        assert quad.size == 200
        assert resample is None

    def test_variable_domain_config(self):
        cfg = VariableDomainGridConfig(kind="variable_domain", parameter_axis=(1.0, 2.0, 2), points_per_slice="4*p")
        quad, _ = grid_from_config(cfg, parameter_names=("p",), half_width="p")
        assert quad.slice_sizes == (5, 7)
        assert np.all(np.abs(quad.points[:, 1]) < quad.points[:, 0])

    def test_variable_domain_needs_half_width(self):
        cfg = VariableDomainGridConfig(kind="variable_domain", parameter_axis=(1.0, 2.0, 2), points_per_slice="4")
        with pytest.raises(ValueError):
            grid_from_config(cfg, parameter_names=("p",))

    def test_half_width_must_be_positive(self):
        domain = half_width_domain("p - 1.5", ("p",))
        assert domain(2.0) == (-0.5, 0.5)
        with pytest.raises(ValueError):
            domain(1.0)

    def test_midpoints(self):
        np.testing.assert_allclose(midpoints(0.0, 1.0, 2), [0.25, 0.75])
