import numpy as np
import pytest

from oracles import sampled_segment_cells
from voxlab import traversal
from voxlab.scene import GridSpec
from voxlab.traversal import FREE_VISIBLE, OCCUPIED_VISIBLE, UNOBSERVED, traverse_ray


def test_axis_aligned_run(unit_grid):
    cells = traverse_ray((0.5, 0.5, 0.5), (3.5, 0.5, 0.5), unit_grid)
    assert cells == [(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0)]


def test_same_cell(unit_grid):
    assert traverse_ray((0.2, 0.3, 0.4), (0.8, 0.7, 0.6), unit_grid) == [(0, 0, 0)]


def test_fully_outside(unit_grid):
    assert traverse_ray((-5, -5, -5), (-4, -4, -4), unit_grid) == []


def test_endpoint_cell_is_last(unit_grid):
    rng = np.random.default_rng(7)
    for _ in range(50):
        a = rng.uniform(0.05, 7.95, size=3)
        b = rng.uniform(0.05, 7.95, size=3)
        cells = traverse_ray(a, b, unit_grid)
        assert cells[-1] == tuple(np.floor(b).astype(int))
        assert cells[0] == tuple(np.floor(a).astype(int))


def test_reverse_symmetry(unit_grid):
    rng = np.random.default_rng(13)
    for _ in range(50):
        a = rng.uniform(0.05, 7.95, size=3)
        b = rng.uniform(0.05, 7.95, size=3)
        fwd = traverse_ray(a, b, unit_grid)
        back = traverse_ray(b, a, unit_grid)
        assert fwd == back[::-1]


def test_matches_sampling_oracle():
    grid = GridSpec(np.array([-4.0, -4.0, -2.0]), 0.5, (16, 16, 8))
    rng = np.random.default_rng(42)
    lo = grid.origin - 1.0
    hi = grid.max_corner + 1.0
    for _ in range(200):
        a = rng.uniform(lo, hi)
        b = rng.uniform(lo, hi)
        got = traverse_ray(a, b, grid)
        want = sampled_segment_cells(a, b, grid)
        assert got == want


def test_corner_tiebreak_steps_x_then_y():
    # Diagonal through the exact corner (1, 1): x steps first.
    grid = GridSpec(np.zeros(3), 1.0, (4, 4, 1))
    cells = traverse_ray((0.5, 0.5, 0.5), (2.5, 2.5, 0.5), grid)
    assert cells == [(0, 0, 0), (1, 0, 0), (1, 1, 0), (2, 1, 0), (2, 2, 0)]


def test_count_exited_excludes_terminal(unit_grid):
    counts = np.zeros(unit_grid.dims, dtype=np.int32)
    traversal.count_exited_cells(
        np.array([[0.5, 0.5, 0.5]]), np.array([[3.5, 0.5, 0.5]]), unit_grid, counts)
    assert counts[0, 0, 0] == 1 and counts[1, 0, 0] == 1 and counts[2, 0, 0] == 1
    assert counts[3, 0, 0] == 0  # terminal cell is a hit, not a pass
    assert counts.sum() == 3


def test_count_exited_ray_leaving_grid(unit_grid):
    counts = np.zeros(unit_grid.dims, dtype=np.int32)
    traversal.count_exited_cells(
        np.array([[0.5, 0.5, 0.5]]), np.array([[20.0, 0.5, 0.5]]), unit_grid, counts)
    assert counts[:, 0, 0].sum() == 8  # every crossed cell is exited


def test_first_occupied_matches_traverse(unit_grid):
    occ = np.zeros(unit_grid.dims, dtype=bool)
    occ[5, 2, 3] = True
    occ[6, 2, 3] = True
    origin = np.array([[0.5, 2.5, 3.5]])
    direction = np.array([[1.0, 0.0, 0.0]])
    hit, cell, t_in, t_out = traversal.first_occupied(origin, direction, unit_grid, occ)
    assert hit[0] and tuple(cell[0]) == (5, 2, 3)
    assert t_in[0] == pytest.approx(4.5)
    assert t_out[0] == pytest.approx(5.5)


def test_first_occupied_miss(unit_grid):
    occ = np.zeros(unit_grid.dims, dtype=bool)
    hit, _, _, _ = traversal.first_occupied(
        np.array([[0.5, 0.5, 0.5]]), np.array([[1.0, 0.2, 0.1]]), unit_grid, occ)
    assert not hit[0]


def test_mark_visibility_corridor():
    grid = GridSpec(np.zeros(3), 1.0, (8, 1, 1))
    occ = np.zeros(grid.dims, dtype=bool)
    occ[5, 0, 0] = True
    state = np.zeros(grid.dims, dtype=np.uint8)
    traversal.mark_visibility(
        np.array([[-1.0, 0.5, 0.5]]), np.array([[1.0, 0.0, 0.0]]), grid, occ, state)
    assert list(state[:, 0, 0]) == [FREE_VISIBLE] * 5 + [OCCUPIED_VISIBLE] + [UNOBSERVED] * 2
