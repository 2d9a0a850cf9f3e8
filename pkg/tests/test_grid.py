"""Tests for the grid module."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from src.errors import (
    ConfigError,
    DegenerateInputError,
    DomainError,
    OutOfBoundsError,
    ShapeMismatchError,
)
from src.grid import (
    GridSpec,
    ProbabilityGrid,
    TargetGrid,
    focal_loss,
    focal_loss_gradient,
    focal_loss_map,
    normalize,
    render_gaussian_target,
    total_mass,
    upsample_bilinear,
)


def single_pixel() -> GridSpec:
    return GridSpec(width=1, height=1, resolution=0.5)


class TestGridSpec:
    """Tests for GridSpec geometry."""

    def test_rejects_invalid_sizes(self):
        """Test that non-positive dimensions are rejected."""
        with pytest.raises(ConfigError):
            GridSpec(width=0, height=4, resolution=0.5)
        with pytest.raises(ConfigError):
            GridSpec(width=4, height=4, resolution=0.0)

    def test_centered_default_frame(self):
        """Test the default agent-centered 224 x 224 frame."""
        spec = GridSpec.centered()

        assert spec.shape == (224, 224)
        assert spec.resolution == 0.5
        assert spec.origin == (-55.75, -55.75)
        assert spec.bounds == (-56.0, -56.0, 56.0, 56.0)

    def test_pixel_round_trip(self):
        """Test that a pixel center maps back to its pixel."""
        spec = GridSpec(width=10, height=8, resolution=0.5, origin=(1.0, -2.0))

        assert spec.center_of(3, 7) == (4.5, -0.5)
        assert spec.pixel_of((4.5, -0.5)) == (3, 7)
        assert spec.pixel_of((4.6, -0.4)) == (3, 7)

    def test_pixel_of_outside_raises(self):
        """Test that points beyond the grid edge are rejected."""
        spec = GridSpec(width=4, height=4, resolution=1.0)

        with pytest.raises(OutOfBoundsError):
            spec.pixel_of((10.0, 0.0))
        assert not spec.contains((-0.6, 0.0))
        assert spec.contains((-0.4, 0.0))

    def test_pixel_centers_layout(self):
        """Test that x varies along columns and y along rows."""
        spec = GridSpec(width=3, height=2, resolution=2.0, origin=(0.0, 10.0))
        xs, ys = spec.pixel_centers()

        assert xs.shape == (2, 3)
        np.testing.assert_array_equal(xs[0], [0.0, 2.0, 4.0])
        np.testing.assert_array_equal(ys[:, 0], [10.0, 12.0])


class TestProbabilityGrid:
    """Tests for ProbabilityGrid validation and helpers."""

    def test_rejects_negative_values(self):
        """Test that negative values are rejected."""
        with pytest.raises(DomainError):
            ProbabilityGrid(single_pixel(), [[-0.1]])

    def test_rejects_non_finite_values(self):
        """Test that NaN and infinity are rejected."""
        with pytest.raises(DomainError):
            ProbabilityGrid(single_pixel(), [[float("nan")]])
        with pytest.raises(DomainError):
            ProbabilityGrid(single_pixel(), [[float("inf")]])

    def test_rejects_wrong_length(self):
        """Test that value count must match width x height."""
        spec = GridSpec(width=3, height=2, resolution=0.5)

        with pytest.raises(ShapeMismatchError):
            ProbabilityGrid(spec, np.zeros(5))

    def test_accepts_row_major_flat_values(self):
        """Test that a flat array is read in row-major order."""
        spec = GridSpec(width=3, height=2, resolution=0.5)
        grid = ProbabilityGrid(spec, [0, 1, 2, 3, 4, 5])

        assert grid.values[1, 0] == 3.0

    def test_values_are_read_only(self):
        """Test that grids are immutable after construction."""
        grid = ProbabilityGrid.zeros(GridSpec(width=2, height=2, resolution=0.5))

        with pytest.raises(ValueError):
            grid.values[0, 0] = 1.0

    def test_delta_and_argmax(self):
        """Test that a delta grid peaks at its point."""
        spec = GridSpec.centered(9, 9, 0.5)
        grid = ProbabilityGrid.delta(spec, (1.0, -0.5), mass=5.0)

        assert grid.argmax_point() == (1.0, -0.5)
        assert grid.value_at((1.0, -0.5)) == 5.0
        assert total_mass(grid) == 5.0

    def test_translated_moves_origin_only(self):
        """Test that translation keeps values and shifts the frame."""
        spec = GridSpec(width=2, height=2, resolution=0.5)
        grid = ProbabilityGrid(spec, [[1, 2], [3, 4]]).translated(7.5, -2.0)

        assert grid.spec.origin == (7.5, -2.0)
        np.testing.assert_array_equal(grid.values, [[1, 2], [3, 4]])


class TestRenderGaussianTarget:
    """Tests for Gaussian target rendering."""

    def test_center_pixel_is_one(self):
        """Test that the ground-truth pixel holds exactly 1."""
        spec = GridSpec.centered(31, 31, 0.5)
        target = render_gaussian_target(spec, (0.0, 0.0))

        assert target.values[15, 15] == 1.0
        assert int(np.sum(target.values == 1.0)) == 1

    def test_values_at_known_distances(self):
        """Test values 4 and 12 pixels away with sigma 4."""
        spec = GridSpec.centered(31, 31, 0.5)
        target = render_gaussian_target(spec, (0.0, 0.0), sigma=4.0)

        assert target.values[15, 19] == pytest.approx(math.exp(-0.5))
        assert target.values[15, 19] == pytest.approx(0.6065, abs=1e-4)
        assert target.values[3, 15] == pytest.approx(math.exp(-4.5))
        assert target.values[3, 15] == pytest.approx(0.0111, abs=1e-4)

    def test_rotation_symmetric(self):
        """Test that equidistant pixels hold equal values."""
        spec = GridSpec.centered(21, 21, 0.5)
        values = render_gaussian_target(spec, (0.0, 0.0)).values

        assert values[10, 13] == values[13, 10] == values[10, 7] == values[7, 10]
        assert values[7, 14] == values[14, 7] == values[13, 6] == values[6, 13]

    def test_decays_with_distance(self):
        """Test that values decrease away from the center."""
        spec = GridSpec.centered(21, 21, 0.5)
        row = render_gaussian_target(spec, (0.0, 0.0)).values[10, 10:]

        assert np.all(np.diff(row) < 0)

    def test_ground_truth_outside_raises(self):
        """Test that an out-of-frame ground truth is rejected."""
        spec = GridSpec.centered(8, 8, 0.5)

        with pytest.raises(OutOfBoundsError):
            render_gaussian_target(spec, (100.0, 0.0))


class TestFocalLoss:
    """Tests for the focal loss and its gradient."""

    def test_positive_pixel(self):
        """Test Y=1, prediction 0.5 on a single pixel."""
        spec = single_pixel()
        loss = focal_loss(ProbabilityGrid(spec, [[0.5]]), TargetGrid(spec, [[1.0]]))

        assert loss == pytest.approx(-0.25 * math.log(0.5))
        assert loss == pytest.approx(0.1733, abs=1e-4)

    def test_negative_pixel(self):
        """Test Y=0, prediction 0.5 on a single pixel."""
        spec = single_pixel()
        loss = focal_loss(ProbabilityGrid(spec, [[0.5]]), TargetGrid(spec, [[0.0]]))

        assert loss == pytest.approx(0.1733, abs=1e-4)

    def test_prediction_outside_open_interval_raises(self):
        """Test that predictions at 0 or 1 are rejected."""
        spec = single_pixel()
        target = TargetGrid(spec, [[1.0]])

        with pytest.raises(DomainError):
            focal_loss(ProbabilityGrid(spec, [[0.0]]), target)
        with pytest.raises(DomainError):
            focal_loss(ProbabilityGrid(spec, [[1.0]]), target)

    def test_spec_mismatch_raises(self):
        """Test that prediction and target must share a spec."""
        pred = ProbabilityGrid(GridSpec(2, 2, 0.5), np.full((2, 2), 0.5))
        target = TargetGrid(GridSpec(2, 2, 0.25), np.zeros((2, 2)))

        with pytest.raises(ShapeMismatchError):
            focal_loss(pred, target)

    def test_loss_is_mean_of_pixel_terms(self):
        """Test that the loss averages its single-pixel evaluations."""
        rng = np.random.default_rng(3)
        spec = GridSpec.centered(8, 8, 0.5)
        target = render_gaussian_target(spec, (0.25, 0.25))
        pred = ProbabilityGrid(spec, rng.uniform(0.05, 0.95, spec.shape))

        singles = [
            focal_loss(
                ProbabilityGrid(single_pixel(), [[pred.values[r, c]]]),
                TargetGrid(single_pixel(), [[target.values[r, c]]]),
            )
            for r in range(8)
            for c in range(8)
        ]
        assert focal_loss(pred, target) == pytest.approx(math.fsum(singles) / 64, rel=1e-12)

    def test_loss_shrinks_as_prediction_approaches_target(self):
        """Test that the loss decreases towards 0 as predictions converge."""
        spec = GridSpec.centered(8, 8, 0.5)
        target = render_gaussian_target(spec, (0.25, 0.25))
        losses = [
            focal_loss(ProbabilityGrid(spec, target.values + t * (0.5 - target.values)), target)
            for t in (1.0, 1e-1, 1e-2, 1e-3)
        ]

        assert all(b < a for a, b in zip(losses, losses[1:]))
        assert losses[-1] < 1e-4

    @settings(max_examples=50, deadline=None)
    @given(
        pred=arrays(np.float64, (4, 4), elements=st.floats(0.01, 0.99)),
        target=arrays(np.float64, (4, 4), elements=st.floats(0.0, 1.0)),
    )
    def test_loss_is_non_negative(self, pred, target):
        """Test that the loss is never negative."""
        spec = GridSpec(4, 4, 0.5)

        assert focal_loss(ProbabilityGrid(spec, pred), TargetGrid(spec, target)) >= 0.0

    @pytest.mark.slow
    def test_gradient_matches_central_differences(self):
        """Test the analytic gradient against central differences on 100 random 8x8 grids."""
        rng = np.random.default_rng(0)
        spec = GridSpec.centered(8, 8, 0.5)
        step = 1e-6
        for _ in range(100):
            row, col = rng.integers(0, 8, size=2)
            target = render_gaussian_target(spec, spec.center_of(int(row), int(col)))
            values = rng.uniform(0.05, 0.95, spec.shape)

            analytic = focal_loss_gradient(ProbabilityGrid(spec, values), target) * values.size
            # Pixel terms are independent, so one shifted grid perturbs every pixel at once
            upper = focal_loss_map(ProbabilityGrid(spec, values + step), target)
            lower = focal_loss_map(ProbabilityGrid(spec, values - step), target)
            numeric = (upper - lower) / (2 * step)

            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-9)

    def test_gradient_of_mean_at_one_pixel(self):
        """Test one pixel's derivative of the averaged loss."""
        spec = GridSpec.centered(8, 8, 0.5)
        target = render_gaussian_target(spec, spec.center_of(4, 4))
        values = np.full(spec.shape, 0.3)
        step = 1e-6

        bumped_up, bumped_down = values.copy(), values.copy()
        bumped_up[4, 4] += step
        bumped_down[4, 4] -= step
        numeric = (
            focal_loss(ProbabilityGrid(spec, bumped_up), target)
            - focal_loss(ProbabilityGrid(spec, bumped_down), target)
        ) / (2 * step)

        analytic = focal_loss_gradient(ProbabilityGrid(spec, values), target)[4, 4]
        assert analytic == pytest.approx(numeric, rel=1e-4)


class TestUpsampleBilinear:
    """Tests for bilinear upsampling."""

    def test_factor_one_is_identity(self):
        """Test that factor 1 returns the same grid."""
        grid = ProbabilityGrid(GridSpec(2, 2, 0.5), [[1, 2], [3, 4]])

        assert upsample_bilinear(grid, 1) is grid

    def test_constant_grid_stays_constant(self):
        """Test that a constant grid upsamples to the same constant."""
        grid = ProbabilityGrid(GridSpec(5, 4, 0.5, origin=(2.0, 3.0)), np.full((4, 5), 0.3))
        result = upsample_bilinear(grid, 2)

        assert result.spec.shape == (7, 9)
        assert result.spec.resolution == 0.25
        assert result.spec.origin == (2.0, 3.0)
        np.testing.assert_allclose(result.values, 0.3, rtol=1e-12)

    def test_midpoint_column(self):
        """Test the hand-evaluated midpoint between columns 0 and 1."""
        grid = ProbabilityGrid(GridSpec(2, 2, 0.5), [[0, 1], [0, 1]])
        result = upsample_bilinear(grid, 2)

        np.testing.assert_allclose(result.values[:, 1], 0.5)
        np.testing.assert_array_equal(result.values[:, 0], 0.0)
        np.testing.assert_allclose(result.values[:, 2], 1.0)

    def test_keeps_input_pixels(self):
        """Test that every input pixel center keeps its value."""
        rng = np.random.default_rng(1)
        grid = ProbabilityGrid(GridSpec(6, 5, 0.5), rng.random((5, 6)))
        result = upsample_bilinear(grid, 3)

        np.testing.assert_allclose(result.values[::3, ::3], grid.values, rtol=1e-12)

    def test_rejects_non_integer_factor(self):
        """Test that fractional factors are rejected."""
        grid = ProbabilityGrid.zeros(GridSpec(2, 2, 0.5))

        with pytest.raises(ConfigError):
            upsample_bilinear(grid, 1.5)

    @settings(max_examples=40, deadline=None)
    @given(
        values=arrays(np.float64, (5, 6), elements=st.floats(0.0, 100.0)),
        factor=st.integers(1, 4),
    )
    def test_stays_within_input_bounds(self, values, factor):
        """Test that output values stay within the input min and max."""
        grid = ProbabilityGrid(GridSpec(6, 5, 0.5), values)
        result = upsample_bilinear(grid, factor).values
        slack = 1e-12 * max(1.0, float(values.max()))

        assert result.min() >= values.min() - slack
        assert result.max() <= values.max() + slack


class TestMass:
    """Tests for total_mass and normalize."""

    def test_zero_grid(self):
        """Test that a zero grid has no mass and cannot be normalized."""
        grid = ProbabilityGrid.zeros(GridSpec(3, 3, 0.5))

        assert total_mass(grid) == 0.0
        with pytest.raises(DegenerateInputError):
            normalize(grid)

    def test_normalize_delta(self):
        """Test that a delta of 5 normalizes to 1."""
        spec = GridSpec.centered(5, 5, 0.5)
        grid = normalize(ProbabilityGrid.delta(spec, (0.0, 0.0), mass=5.0))

        assert grid.value_at((0.0, 0.0)) == 1.0

    def test_normalize_uniform(self):
        """Test a uniform 10x10 grid of 0.02."""
        grid = ProbabilityGrid(GridSpec(10, 10, 0.5), np.full((10, 10), 0.02))

        assert total_mass(grid) == pytest.approx(2.0)
        np.testing.assert_allclose(normalize(grid).values, 0.01)
