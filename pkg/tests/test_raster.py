"""Image-plane state, diff blending, and goal window matching."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from affplan.errors import DimensionError, FormatError
from affplan.raster import (NEGATIVE, POSITIVE, DiffDescriptor, GoalSpec,
                            RasterState, apply_diff, blank_state, change_mask,
                            export_ppm, goal_loss, load_goal, load_raster,
                            load_state, make_diff, project, sample_pixel,
                            save_raster, window_mse)

unit = st.floats(0.0, 1.0, width=32)


def unit_raster(h, w, c):
    return hnp.arrays(np.float32, (h, w, c), elements=unit)


def brute_force_best(goal: GoalSpec, state: RasterState):
    """Reference matcher: try every placement with the plain slice MSE."""
    h, w = goal.height, goal.width
    best_loss, best_x, best_y = np.inf, -1, -1
    for y in range(state.resolution - h + 1):
        for x in range(state.resolution - w + 1):
            mse = window_mse(goal, state, x, y)
            if mse < best_loss:
                best_loss, best_x, best_y = mse, x, y
    return best_loss, best_x, best_y


class TestGoalLoss:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 8),
           st.sampled_from([(0, 1, 2), (0, 1, 2, 3), (3,), (0, 2)]))
    def test_matches_brute_force(self, seed, gh, gw, channels):
        rng = np.random.default_rng(seed)
        state = RasterState(rng.random((12, 12, 4), dtype=np.float32))
        goal = GoalSpec(rng.random((gh, gw, 4), dtype=np.float32),
                        POSITIVE, channels)
        loss, x, y = goal_loss(goal, state)
        ref_loss, ref_x, ref_y = brute_force_best(goal, state)
        assert loss == pytest.approx(ref_loss, abs=1e-12)
        assert (x, y) == (ref_x, ref_y)

    def test_blank_state_single_dark_pixel(self):
        state = blank_state(8, colour=(0.5, 0.5, 0.5))
        goal = GoalSpec(np.zeros((1, 1, 3), dtype=np.float32),
                        channels=(0, 1, 2))
        loss, x, y = goal_loss(goal, state)
        assert loss == pytest.approx(0.25)
        assert (x, y) == (0, 0)

    def test_exact_match_is_zero(self):
        rng = np.random.default_rng(3)
        data = rng.random((10, 10, 4), dtype=np.float32)
        state = RasterState(data)
        goal = GoalSpec(data[4:7, 2:6].copy())
        loss, x, y = goal_loss(goal, state)
        assert loss == 0.0
        assert (x, y) == (2, 4)

    def test_full_size_goal_has_one_placement(self):
        rng = np.random.default_rng(4)
        data = rng.random((6, 6, 4), dtype=np.float32)
        loss, x, y = goal_loss(GoalSpec(data), RasterState(data))
        assert (loss, x, y) == (0.0, 0, 0)

    def test_tie_breaks_to_smallest_y_then_x(self):
        data = np.full((10, 10, 4), 0.5, dtype=np.float32)
        data[2:4, 5:7] = 1.0
        data[6:8, 1:3] = 1.0
        goal = GoalSpec(np.ones((2, 2, 4), dtype=np.float32))
        loss, x, y = goal_loss(goal, RasterState(data))
        assert loss == 0.0
        assert (x, y) == (5, 2)

    def test_depth_only_channel(self):
        data = np.full((8, 8, 4), 0.5, dtype=np.float32)
        data[3, 4, 3] = 1.0
        goal_img = np.zeros((1, 1, 4), dtype=np.float32)
        goal_img[0, 0, 3] = 1.0
        loss, x, y = goal_loss(GoalSpec(goal_img, channels=(3,)),
                               RasterState(data))
        assert loss == 0.0
        assert (x, y) == (4, 3)

    def test_oversized_goal_rejected(self):
        goal = GoalSpec(np.zeros((9, 2, 4), dtype=np.float32))
        with pytest.raises(DimensionError):
            goal_loss(goal, blank_state(8))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_loss_never_negative(self, seed):
        rng = np.random.default_rng(seed)
        data = rng.random((9, 9, 4), dtype=np.float32)
        goal = GoalSpec(data[1:4, 1:4].copy())
        loss, _, _ = goal_loss(goal, RasterState(data))
        assert loss >= 0.0


class TestGoalSpec:
    def test_three_channel_goal_cannot_use_depth(self):
        with pytest.raises(DimensionError):
            GoalSpec(np.zeros((2, 2, 3), dtype=np.float32), channels=(0, 3))

    def test_channels_sorted_and_deduplicated(self):
        g = GoalSpec(np.zeros((2, 2, 4), dtype=np.float32),
                     channels=(2, 0, 2))
        assert g.channels == (0, 2)

    def test_bad_polarity(self):
        with pytest.raises(DimensionError):
            GoalSpec(np.zeros((2, 2, 4), dtype=np.float32), polarity="maybe")

    def test_out_of_range_values(self):
        with pytest.raises(DimensionError):
            GoalSpec(np.full((2, 2, 4), 1.5, dtype=np.float32))


class TestDiff:
    @settings(max_examples=40, deadline=None)
    @given(unit_raster(6, 6, 4), unit_raster(6, 6, 4))
    def test_roundtrip_reconstructs_after(self, before, after):
        b, a = RasterState(before), RasterState(after)
        assert np.array_equal(apply_diff(b, make_diff(b, a)).data, a.data)

    @settings(max_examples=40, deadline=None)
    @given(unit_raster(5, 5, 4))
    def test_zero_mask_keeps_state(self, data):
        state = RasterState(data)
        diff = DiffDescriptor(np.zeros((5, 5, 5), dtype=np.float32))
        assert np.array_equal(apply_diff(state, diff).data, state.data)

    def test_full_mask_replaces_state(self):
        state = blank_state(4)
        paint = np.zeros((4, 4, 5), dtype=np.float32)
        paint[:, :, :4] = 0.75
        paint[:, :, 4] = 1.0
        out = apply_diff(state, DiffDescriptor(paint))
        assert np.all(out.data == np.float32(0.75))

    def test_change_mask_flags_any_channel(self):
        a = blank_state(4)
        data = a.data.copy()
        data[1, 2, 3] += 0.25
        m = change_mask(a, RasterState(data))
        assert m[1, 2] == 1.0 and m.sum() == 1.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            apply_diff(blank_state(4),
                       DiffDescriptor(np.zeros((5, 5, 5), dtype=np.float32)))


class TestProjection:
    def test_centre_and_corners(self):
        assert project((0.5, 0.5), 32, 32) == (16, 16)
        assert project((0.0, 0.0), 32, 32) == (0, 0)
        assert project((1.0, 1.0), 32, 32) == (31, 31)
        assert project((0.999, 0.0), 32, 32) == (31, 0)

    def test_clamps_out_of_extent(self):
        assert project((-0.3, 2.0), 16, 16) == (0, 15)

    def test_sample_pixel_reads_projected_cell(self):
        data = np.full((8, 8, 4), 0.5, dtype=np.float32)
        data[6, 2] = (0.1, 0.2, 0.3, 0.4)
        got = sample_pixel(RasterState(data), (2.5 / 8, 6.5 / 8))
        assert got == pytest.approx((0.1, 0.2, 0.3, 0.4))


class TestFiles:
    def test_raster_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        arr = rng.random((7, 5, 4)).astype(np.float32)
        p = tmp_path / "x.rgbdf"
        save_raster(arr, p)
        assert np.array_equal(load_raster(p), arr)

    def test_state_and_goal_loaders(self, tmp_path):
        arr = np.random.default_rng(1).random((6, 6, 4)).astype(np.float32)
        p = tmp_path / "s.rgbdf"
        save_raster(arr, p)
        assert np.array_equal(load_state(p).data, arr)
        g = load_goal(p, NEGATIVE)
        assert g.polarity == NEGATIVE and g.channels == (0, 1, 2, 3)

    def test_rgb_goal_drops_depth_channel(self, tmp_path):
        p = tmp_path / "g.rgbdf"
        save_raster(np.zeros((2, 2, 3), dtype=np.float32), p)
        assert load_goal(p).channels == (0, 1, 2)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk"
        p.write_bytes(b"not a raster")
        with pytest.raises(FormatError):
            load_raster(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "cut.rgbdf"
        save_raster(np.zeros((4, 4, 4), dtype=np.float32), p)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(FormatError):
            load_raster(p)

    def test_export_ppm_headers(self, tmp_path):
        p = tmp_path / "img.ppm"
        export_ppm(blank_state(4), p, tmp_path / "img.pgm")
        assert p.read_bytes().startswith(b"P6\n4 4\n255\n")
        assert (tmp_path / "img.pgm").read_bytes().startswith(b"P5\n4 4\n255\n")
