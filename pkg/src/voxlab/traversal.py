"""Exact voxel traversal for line segments and rays.

One stepping rule serves every consumer in the package: segment cell
enumeration, pass/hit counting for the consistency filter, visibility
marking, and first-occupied queries for rendering and ray metrics.  Keeping
the rule in one place guarantees that rendering discretization and filter
counting agree cell-for-cell.

Semantics: a cell is traversed iff the open segment chord inside it has
positive length.  A point exactly on a cell's max boundary belongs to the
next cell (floor convention, same as :func:`voxlab.scene.world_to_voxel`).
When a segment crosses a cell corner or edge exactly, boundaries are stepped
in x, then y, then z order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from voxlab.scene import GridSpec

FREE_VISIBLE = 1
OCCUPIED_VISIBLE = 2
UNOBSERVED = 0


@dataclass
class _Lockstep:
    """Per-ray DDA state advanced one boundary crossing at a time."""

    cell: np.ndarray      # (N, 3) int64 current cell
    tmax: np.ndarray      # (N, 3) parametric t of next crossing per axis
    tdelta: np.ndarray    # (N, 3) t increment per cell along each axis
    step: np.ndarray      # (N, 3) int64 in {-1, 0, +1}
    t_entry: np.ndarray   # (N,)   t at which the current cell was entered
    t_end: np.ndarray     # (N,)   clipped parametric end of the ray
    active: np.ndarray    # (N,)   bool

    def next_crossing(self) -> np.ndarray:
        return np.min(self.tmax, axis=1)


def _setup(origins: np.ndarray, deltas: np.ndarray, grid: GridSpec, t_end) -> _Lockstep:
    """Clip rays ``o + t*d, t in [0, t_end]`` to the grid and seed DDA state."""
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    d = np.atleast_2d(np.asarray(deltas, dtype=np.float64))
    n = o.shape[0]
    t_end = np.broadcast_to(np.asarray(t_end, dtype=np.float64), (n,)).copy()

    gmin = grid.origin
    gmax = grid.max_corner
    with np.errstate(divide="ignore", invalid="ignore"):
        d_safe = np.where(d == 0.0, 1.0, d)
        ta = (gmin - o) / d_safe
        tb = (gmax - o) / d_safe
    lo = np.minimum(ta, tb)
    hi = np.maximum(ta, tb)
    zero = d == 0.0
    # Axis-parallel rays: inside the slab iff gmin <= o < gmax (floor convention).
    inside0 = (o >= gmin) & (o < gmax)
    lo[zero] = np.where(inside0[zero], -np.inf, np.inf)
    hi[zero] = np.where(inside0[zero], np.inf, -np.inf)

    t0 = np.maximum(lo.max(axis=1), 0.0)
    t1 = np.minimum(hi.min(axis=1), t_end)
    active = t0 < t1
    # A zero-direction ray with no parametric end would never terminate.
    active &= ~(np.all(zero, axis=1) & np.isinf(t1))

    p0 = o + t0[:, None] * d
    cell = grid.point_indices(p0)
    np.clip(cell, 0, np.asarray(grid.dims) - 1, out=cell)

    step = np.sign(d).astype(np.int64)
    with np.errstate(divide="ignore"):
        tdelta = np.where(zero, np.inf, grid.resolution / np.abs(d_safe))
        boundary = gmin + (cell + (step > 0)) * grid.resolution
        tmax = np.where(zero, np.inf, (boundary - o) / d_safe)

    return _Lockstep(cell=cell, tmax=tmax, tdelta=tdelta, step=step,
                     t_entry=t0, t_end=t1, active=active)


def _advance(st: _Lockstep, rows: np.ndarray) -> np.ndarray:
    """Cross one cell boundary for the given rays; returns each crossing t.

    ``argmin`` returns the first minimal axis, which realizes the documented
    x-then-y-then-z tie-break for exact corner and edge crossings.
    """
    axis = np.argmin(st.tmax[rows], axis=1)
    t_cross = st.tmax[rows, axis]
    st.t_entry[rows] = t_cross
    st.cell[rows, axis] += st.step[rows, axis]
    st.tmax[rows, axis] += st.tdelta[rows, axis]
    return t_cross


def _in_bounds(cell: np.ndarray, dims) -> np.ndarray:
    return np.all((cell >= 0) & (cell < np.asarray(dims)), axis=1)


def _max_iters(grid: GridSpec) -> int:
    return sum(grid.dims) + 4


def collect_cells(origins, endpoints, grid: GridSpec) -> list[np.ndarray]:
    """Ordered in-bounds cells traversed by each segment (ragged result)."""
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    e = np.atleast_2d(np.asarray(endpoints, dtype=np.float64))
    st = _setup(o, e - o, grid, 1.0)

    chunks_rows: list[np.ndarray] = []
    chunks_cells: list[np.ndarray] = []
    order = 0
    orders: list[np.ndarray] = []
    # Record the entry cells, then every in-bounds cell crossed into.
    rows = np.nonzero(st.active)[0]
    if rows.size:
        chunks_rows.append(rows)
        chunks_cells.append(st.cell[rows].copy())
        orders.append(np.full(rows.size, order, dtype=np.int64))
    for _ in range(_max_iters(grid)):
        if not st.active.any():
            break
        order += 1
        cross = st.active & (st.next_crossing() <= st.t_end)
        st.active &= cross  # rays that cannot cross have reached their terminal cell
        rows = np.nonzero(cross)[0]
        if rows.size == 0:
            break
        _advance(st, rows)
        ok = _in_bounds(st.cell[rows], grid.dims)
        st.active[rows[~ok]] = False
        rows = rows[ok]
        if rows.size:
            chunks_rows.append(rows)
            chunks_cells.append(st.cell[rows].copy())
            orders.append(np.full(rows.size, order, dtype=np.int64))
    if st.active.any():
        raise AssertionError("traversal failed to terminate")

    out: list[np.ndarray] = [np.empty((0, 3), dtype=np.int64) for _ in range(o.shape[0])]
    if chunks_rows:
        all_rows = np.concatenate(chunks_rows)
        all_cells = np.concatenate(chunks_cells)
        all_orders = np.concatenate(orders)
        sort = np.lexsort((all_orders, all_rows))
        all_rows, all_cells = all_rows[sort], all_cells[sort]
        starts = np.searchsorted(all_rows, np.arange(o.shape[0]))
        ends = np.searchsorted(all_rows, np.arange(o.shape[0]), side="right")
        for i in range(o.shape[0]):
            out[i] = all_cells[starts[i]:ends[i]]
    return out


def traverse_ray(origin, endpoint, grid: GridSpec) -> list[tuple[int, int, int]]:
    """Ordered cells intersected by one segment, clipped to the grid.

    The cell containing the endpoint comes last when it lies inside the grid;
    a segment entirely outside the grid yields an empty list.
    """
    cells = collect_cells(np.asarray(origin)[None, :], np.asarray(endpoint)[None, :], grid)[0]
    return [tuple(int(c) for c in row) for row in cells]


def count_exited_cells(origins, endpoints, grid: GridSpec, out: np.ndarray) -> None:
    """Accumulate, into ``out`` (dims-shaped int array), how many segments exit
    each cell after entering it.

    A segment "exits" every cell it leaves through a boundary before reaching
    its endpoint; the cell containing the endpoint is never counted.  This is
    exactly the pass count of the ray-consistency filter.
    """
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    e = np.atleast_2d(np.asarray(endpoints, dtype=np.float64))
    st = _setup(o, e - o, grid, 1.0)
    nx, ny, nz = grid.dims
    flat = out.reshape(-1)
    for _ in range(_max_iters(grid)):
        if not st.active.any():
            break
        cross = st.active & (st.next_crossing() <= st.t_end)
        st.active &= cross
        rows = np.nonzero(cross)[0]
        if rows.size == 0:
            break
        # The cell being left behind is a pass.
        old = st.cell[rows]
        lin = (old[:, 0] * ny + old[:, 1]) * nz + old[:, 2]
        np.add.at(flat, lin, 1)
        _advance(st, rows)
        ok = _in_bounds(st.cell[rows], grid.dims)
        st.active[rows[~ok]] = False
    if st.active.any():
        raise AssertionError("traversal failed to terminate")


def first_occupied(origins, directions, grid: GridSpec, occupancy: np.ndarray,
                   t_end=np.inf) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """First non-empty cell hit by each ray ``o + t*d``.

    Args:
        occupancy: dims-shaped boolean array, True where a cell is occupied.
        t_end: optional per-ray parametric cutoff (defaults to the grid exit).

    Returns:
        hit:     (N,) bool
        cell:    (N, 3) hit cell index (undefined where ``hit`` is False)
        t_in:    (N,) t at which the ray enters the hit cell
        t_out:   (N,) t at which the ray leaves the hit cell
    """
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    d = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    st = _setup(o, d, grid, t_end)
    n = o.shape[0]
    hit = np.zeros(n, dtype=bool)
    hit_cell = np.zeros((n, 3), dtype=np.int64)
    t_in = np.zeros(n)
    t_out = np.zeros(n)
    for _ in range(_max_iters(grid)):
        rows = np.nonzero(st.active)[0]
        if rows.size == 0:
            break
        occ = occupancy[st.cell[rows, 0], st.cell[rows, 1], st.cell[rows, 2]]
        hits = rows[occ]
        if hits.size:
            hit[hits] = True
            hit_cell[hits] = st.cell[hits]
            t_in[hits] = st.t_entry[hits]
            t_out[hits] = np.minimum(np.min(st.tmax[hits], axis=1), st.t_end[hits])
            st.active[hits] = False
        cross = st.active & (st.next_crossing() <= st.t_end)
        st.active &= cross
        rows = np.nonzero(cross)[0]
        if rows.size == 0:
            continue
        _advance(st, rows)
        ok = _in_bounds(st.cell[rows], grid.dims)
        st.active[rows[~ok]] = False
    if st.active.any():
        raise AssertionError("traversal failed to terminate")
    return hit, hit_cell, t_in, t_out


def mark_visibility(origins, directions, grid: GridSpec, occupancy: np.ndarray,
                    state: np.ndarray) -> None:
    """Mark cells along rays: free until the first occupied cell, which is
    marked occupied-visible; cells beyond it are left untouched.

    ``state`` is a dims-shaped uint8 array holding UNOBSERVED / FREE_VISIBLE /
    OCCUPIED_VISIBLE.  A cell's mark depends only on its own occupancy, so
    concurrent or repeated marking commutes.
    """
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    d = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    st = _setup(o, d, grid, np.inf)
    for _ in range(_max_iters(grid)):
        rows = np.nonzero(st.active)[0]
        if rows.size == 0:
            break
        cells = st.cell[rows]
        occ = occupancy[cells[:, 0], cells[:, 1], cells[:, 2]]
        occ_cells = cells[occ]
        free_cells = cells[~occ]
        state[occ_cells[:, 0], occ_cells[:, 1], occ_cells[:, 2]] = OCCUPIED_VISIBLE
        state[free_cells[:, 0], free_cells[:, 1], free_cells[:, 2]] = FREE_VISIBLE
        st.active[rows[occ]] = False
        cross = st.active & (st.next_crossing() <= st.t_end)
        st.active &= cross
        rows = np.nonzero(cross)[0]
        if rows.size == 0:
            continue
        _advance(st, rows)
        ok = _in_bounds(st.cell[rows], grid.dims)
        st.active[rows[~ok]] = False
    if st.active.any():
        raise AssertionError("traversal failed to terminate")
