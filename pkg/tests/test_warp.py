"""Warping operator against an exhaustive per-cell gather oracle."""

import numpy as np
import pytest
import torch

from gridcast.geometry import GridGeometry, Pose
from gridcast.grids import GeometryMismatchError, SceneFlowGrid
from gridcast.warp import warp_flow_grids, warp_grid, warp_once, warp_sequence


def gather_oracle(prev, fx, fy, mode):
    """Reference warp: explicit per-cell gather with zero padding."""
    h, w = prev.shape
    out = np.zeros_like(prev, dtype=np.float64)
    for r in range(h):
        for c in range(w):
            yy = r + fy[r, c]
            xx = c + fx[r, c]
            if mode == "nearest":
                ri, ci = int(np.rint(yy)), int(np.rint(xx))
                if 0 <= ri < h and 0 <= ci < w:
                    out[r, c] = prev[ri, ci]
            else:
                y0, x0 = int(np.floor(yy)), int(np.floor(xx))
                ty, tx = yy - y0, xx - x0
                acc = 0.0
                for dy, wy in ((0, 1 - ty), (1, ty)):
                    for dx, wx in ((0, 1 - tx), (1, tx)):
                        ri, ci = y0 + dy, x0 + dx
                        if 0 <= ri < h and 0 <= ci < w:
                            acc += wy * wx * prev[ri, ci]
                out[r, c] = acc
    return out


def to_t(a):
    return torch.from_numpy(np.asarray(a, dtype=np.float64))


class TestWarpOnce:
    def test_zero_flow_identity(self, rng):
        prev = rng.random((8, 8))
        zero = np.zeros((8, 8))
        for mode in ("nearest", "bilinear"):
            out = warp_once(to_t(prev), to_t(zero), to_t(zero), mode).numpy()
            assert np.array_equal(out, prev), mode

    def test_single_cell_unit_shift(self):
        prev = np.zeros((8, 8))
        prev[4, 4] = 1.0
        fx = np.full((8, 8), -1.0)
        fy = np.zeros((8, 8))
        out = warp_once(to_t(prev), to_t(fx), to_t(fy), "nearest").numpy()
        expected = gather_oracle(prev, fx, fy, "nearest")
        assert np.array_equal(out, expected)
        assert out[4, 5] == 1.0 and out.sum() == 1.0

    @pytest.mark.parametrize("mode", ["nearest", "bilinear"])
    def test_matches_oracle_random_flows(self, mode, rng):
        for case in range(50):
            prev = rng.random((8, 8))
            if case % 2 == 0:
                fx = rng.integers(-9, 10, size=(8, 8)).astype(float)
                fy = rng.integers(-9, 10, size=(8, 8)).astype(float)
            else:
                fx = rng.uniform(-9, 9, size=(8, 8))
                fy = rng.uniform(-9, 9, size=(8, 8))
            out = warp_once(to_t(prev), to_t(fx), to_t(fy), mode).numpy()
            expected = gather_oracle(prev, fx, fy, mode)
            if mode == "nearest" or case % 2 == 0:
                assert np.array_equal(out, expected)
            else:
                assert np.abs(out - expected).max() <= 1e-6

    def test_uniform_field_invariance(self):
        prev = np.full((8, 8), 0.37)
        fx = np.full((8, 8), 2.0)
        fy = np.full((8, 8), -3.0)
        out = warp_once(to_t(prev), to_t(fx), to_t(fy), "nearest").numpy()
        assert np.allclose(out[3:, :6], 0.37)

    def test_range_preserved(self, rng):
        prev = rng.random((8, 8))
        fx = rng.uniform(-2, 2, (8, 8))
        fy = rng.uniform(-2, 2, (8, 8))
        out_n = warp_once(to_t(prev), to_t(fx), to_t(fy), "nearest").numpy()
        out_b = warp_once(to_t(prev), to_t(fx), to_t(fy), "bilinear").numpy()
        assert out_n.min() >= 0.0 and out_n.max() <= prev.max()
        assert out_b.min() >= 0.0 and out_b.max() <= prev.max() + 1e-12

    def test_mass_conserved_for_integer_inbounds_shift(self, rng):
        prev = np.zeros((8, 8))
        prev[3:5, 3:5] = rng.random((2, 2))
        fx = np.full((8, 8), -2.0)
        fy = np.full((8, 8), 1.0)
        out = warp_once(to_t(prev), to_t(fx), to_t(fy), "nearest").numpy()
        assert out.sum() == pytest.approx(prev.sum())

    def test_mass_subadditive_under_uniform_flow(self, rng):
        # Zero padding means occupancy can only leave the grid, never enter.
        prev = rng.random((8, 8))
        for mode in ("nearest", "bilinear"):
            for shift in ((0.7, -1.3), (4.0, 0.0), (-2.5, 3.5)):
                fx = np.full((8, 8), shift[0])
                fy = np.full((8, 8), shift[1])
                out = warp_once(to_t(prev), to_t(fx), to_t(fy), mode).numpy()
                assert out.sum() <= prev.sum() + 1e-9, (mode, shift)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            warp_once(torch.zeros(4, 4), torch.zeros(5, 5), torch.zeros(4, 4))

    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            warp_once(torch.zeros(4, 4), torch.zeros(4, 4), torch.zeros(4, 4), "cubic")

    def test_batched_matches_unbatched(self, rng):
        prev = rng.random((3, 8, 8))
        fx = rng.uniform(-3, 3, (3, 8, 8))
        fy = rng.uniform(-3, 3, (3, 8, 8))
        batched = warp_once(to_t(prev), to_t(fx), to_t(fy), "bilinear").numpy()
        for i in range(3):
            single = warp_once(to_t(prev[i]), to_t(fx[i]), to_t(fy[i]), "bilinear").numpy()
            assert np.allclose(batched[i], single)

    def test_gradients_match_finite_differences(self, rng):
        prev = torch.tensor(rng.random((6, 6)), dtype=torch.float64, requires_grad=True)
        fx = torch.tensor(rng.uniform(-2, 2, (6, 6)) + 0.3, dtype=torch.float64,
                          requires_grad=True)
        fy = torch.tensor(rng.uniform(-2, 2, (6, 6)) + 0.4, dtype=torch.float64,
                          requires_grad=True)
        weights = torch.tensor(rng.random((6, 6)), dtype=torch.float64)

        def scalar():
            return (warp_once(prev, fx, fy, "bilinear") * weights).sum()

        scalar().backward()
        h = 1e-6
        for tensor, grad in ((prev, prev.grad), (fx, fx.grad), (fy, fy.grad)):
            for _ in range(20):
                r, c = rng.integers(0, 6, 2)
                with torch.no_grad():
                    tensor[r, c] += h
                    up = scalar().item()
                    tensor[r, c] -= 2 * h
                    down = scalar().item()
                    tensor[r, c] += h
                fd = (up - down) / (2 * h)
                an = float(grad[r, c])
                denom = max(abs(fd), abs(an), 1e-8)
                assert abs(fd - an) / denom < 1e-4


class TestWarpSequence:
    def test_zero_flows_identity_at_depth(self, rng):
        seed = rng.random((8, 8))
        flows = np.zeros((5, 8, 8))
        out = warp_sequence(to_t(seed), to_t(flows), to_t(flows), "bilinear").numpy()
        for tau in range(5):
            assert np.array_equal(out[tau], seed)

    def test_shift_composition(self, rng):
        seed = rng.random((8, 8))
        fx = np.full((2, 8, 8), -1.0)
        fy = np.zeros((2, 8, 8))
        two_steps = warp_sequence(to_t(seed), to_t(fx), to_t(fy), "nearest").numpy()[-1]
        single = warp_once(to_t(seed), to_t(np.full((8, 8), -2.0)),
                           to_t(np.zeros((8, 8))), "nearest").numpy()
        interior = (slice(0, 8), slice(2, 8))
        assert np.array_equal(two_steps[interior], single[interior])

    def test_empty_flow_list_rejected(self):
        with pytest.raises(ValueError):
            warp_sequence(torch.zeros(8, 8), torch.zeros(0, 8, 8), torch.zeros(0, 8, 8))
        with pytest.raises(ValueError):
            warp_flow_grids(np.zeros((8, 8)), [], source="veh")

    def test_grid_level_geometry_check(self):
        geom = GridGeometry(8, 8, 1.0, Pose(0, 0, 0))
        flow = SceneFlowGrid(fx=np.zeros((8, 8)), fy=np.zeros((8, 8)), geometry=geom)
        with pytest.raises(GeometryMismatchError):
            warp_grid(np.zeros((6, 6)), flow)

    def test_warped_sequence_wrapper(self, rng):
        geom = GridGeometry(8, 8, 1.0, Pose(0, 0, 0))
        seed = (rng.random((8, 8)) > 0.6).astype(np.float32)
        flows = [SceneFlowGrid(fx=np.full((8, 8), -1.0), fy=np.zeros((8, 8)),
                               geometry=geom) for _ in range(3)]
        warped = warp_flow_grids(seed, flows, source="veh", mode="nearest")
        assert warped.grids.shape == (3, 8, 8)
        assert warped.source == "veh"
        assert warped.grids.min() >= 0.0 and warped.grids.max() <= 1.0
