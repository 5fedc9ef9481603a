"""Computational grids and implicit-surface fields.

Sets are represented by scalar fields sampled on a rectangular lattice; a state
belongs to the set iff the field value there is <= 0 (sublevel convention).
Signed-distance constructors, pointwise set algebra, position-plane dilation,
projection/extension between the full state space and the position plane, and
multilinear interpolation live here.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

#: Value used for the "absent obstacle" sentinel field.
LARGE = 1.0e6


class GridError(ValueError):
    pass


class OutOfDomainError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Rectangular N-D lattice with per-dimension periodicity.

    For a periodic dimension the endpoint node is not duplicated:
    spacing = (max - min) / count.  Otherwise spacing = (max - min) / (count - 1).
    """

    mins: tuple
    maxs: tuple
    counts: tuple
    periodic: tuple

    def __post_init__(self):
        n = len(self.mins)
        if not (len(self.maxs) == len(self.counts) == len(self.periodic) == n):
            raise GridError("mins/maxs/counts/periodic must have equal lengths")
        for k in range(n):
            if self.counts[k] < 3:
                raise GridError(f"counts[{k}] = {self.counts[k]} < 3")
            if not self.mins[k] < self.maxs[k]:
                raise GridError(f"inverted bounds in dimension {k}")

    @property
    def dim(self):
        return len(self.counts)

    @property
    def shape(self):
        return tuple(self.counts)

    @property
    def num_nodes(self):
        return int(np.prod(self.counts))

    @property
    def spacing(self):
        return tuple(
            (self.maxs[k] - self.mins[k]) / (self.counts[k] if self.periodic[k] else self.counts[k] - 1)
            for k in range(self.dim)
        )

    def coords(self, k):
        """Node coordinates along dimension k."""
        return self.mins[k] + self.spacing[k] * np.arange(self.counts[k])

    def axis_coords(self, k):
        """coords(k) broadcast to the grid's dimensionality along axis k."""
        shape = [1] * self.dim
        shape[k] = self.counts[k]
        return self.coords(k).reshape(shape)

    def position_subgrid(self):
        """2-D grid over the first two (position) dimensions."""
        if self.dim < 2:
            raise GridError("grid has no position plane")
        return Grid(self.mins[:2], self.maxs[:2], self.counts[:2], self.periodic[:2])

    def wrap(self, x):
        """Wrap periodic coordinates of a state into the fundamental domain."""
        out = list(x)
        for k in range(self.dim):
            if self.periodic[k]:
                span = self.maxs[k] - self.mins[k]
                out[k] = self.mins[k] + (out[k] - self.mins[k]) % span
        return tuple(out)


def make_grid(mins, maxs, counts, periodic):
    return Grid(tuple(float(v) for v in mins), tuple(float(v) for v in maxs),
                tuple(int(c) for c in counts), tuple(bool(p) for p in periodic))


@dataclass(eq=False)
class Field:
    """Scalar field on a Grid; the zero sublevel set is the represented set.

    ``is_sdf`` marks fields known to be exact signed distances in the position
    plane, enabling the value-shift shortcut in :func:`dilate_positions`.
    """

    grid: Grid
    values: np.ndarray
    is_sdf: bool = False
    _grad: tuple = dc_field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise GridError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")

    def copy(self):
        return Field(self.grid, self.values.copy(), self.is_sdf)

    @property
    def is_absent(self):
        return bool(np.all(self.values >= LARGE))

    def gradient_fields(self):
        """Central-difference gradient along each dimension, cached."""
        if self._grad is None:
            self._grad = tuple(_node_gradient(self.grid, self.values, k) for k in range(self.grid.dim))
        return self._grad


@dataclass(eq=False)
class TimeField:
    """One field per sample time, all on a shared grid; times strictly increasing."""

    times: np.ndarray
    fields: list

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        if len(self.times) != len(self.fields):
            raise GridError("times and fields length mismatch")
        if len(self.times) == 0:
            raise GridError("empty TimeField")
        if np.any(np.diff(self.times) <= 0):
            raise GridError("times must be strictly increasing")
        g = self.fields[0].grid
        for f in self.fields:
            if f.grid != g:
                raise GridError("all fields must share one grid")

    @property
    def grid(self):
        return self.fields[0].grid

    def at_time(self, t):
        """Field at time t: linear interpolation between bracketing samples,
        clamped to the first/last sample outside the covered span.

        Linear blending of the two neighboring level-set fields keeps a
        moving set's boundary within O(sample spacing squared) of its true
        position, versus a full (speed x spacing) lag for a nearest-sample
        lookup."""
        times = self.times
        if t <= times[0]:
            return self.fields[0]
        if t >= times[-1]:
            return self.fields[-1]
        i = int(np.searchsorted(times, t, side="right")) - 1
        t0, t1 = times[i], times[i + 1]
        w = (t - t0) / (t1 - t0)
        if w <= 1e-12:
            return self.fields[i]
        if w >= 1.0 - 1e-12:
            return self.fields[i + 1]
        a, b = self.fields[i], self.fields[i + 1]
        return Field(a.grid, (1.0 - w) * a.values + w * b.values,
                     is_sdf=False)


def absent_field(grid):
    """Uniform +LARGE field: the 'no obstacle' sentinel."""
    return Field(grid, np.full(grid.shape, LARGE))


def _position_radii(grid, center):
    """||p - center|| over the position plane, broadcast to grid shape."""
    dx = grid.axis_coords(0) - center[0]
    dy = grid.axis_coords(1) - center[1]
    return np.sqrt(dx * dx + dy * dy)


def sdf_disk_cylinder(grid, center, radius):
    """Signed distance to a position-plane disk, constant in the other dims."""
    if grid.dim < 2:
        raise GridError("need at least 2 dimensions")
    if radius <= 0:
        raise GridError("radius must be positive")
    vals = _position_radii(grid, center) - radius
    return Field(grid, np.broadcast_to(vals, grid.shape).copy(), is_sdf=True)


def sdf_axis_box(grid, lo, hi):
    """Exact signed distance to an axis-aligned position-plane rectangle."""
    if grid.dim < 2:
        raise GridError("need at least 2 dimensions")
    lo = (float(lo[0]), float(lo[1]))
    hi = (float(hi[0]), float(hi[1]))
    if not (lo[0] < hi[0] and lo[1] < hi[1]):
        raise GridError("degenerate box")
    cx = (lo[0] + hi[0]) / 2
    cy = (lo[1] + hi[1]) / 2
    hx = (hi[0] - lo[0]) / 2
    hy = (hi[1] - lo[1]) / 2
    qx = np.abs(grid.axis_coords(0) - cx) - hx
    qy = np.abs(grid.axis_coords(1) - cy) - hy
    outside = np.sqrt(np.maximum(qx, 0.0) ** 2 + np.maximum(qy, 0.0) ** 2)
    inside = np.minimum(np.maximum(qx, qy), 0.0)
    vals = outside + inside
    return Field(grid, np.broadcast_to(vals, grid.shape).copy(), is_sdf=True)


def _check_same_grid(f, g):
    if f.grid != g.grid:
        raise GridError("fields live on different grids")


def set_union(f, g):
    """Pointwise min: union of the zero sublevel sets."""
    _check_same_grid(f, g)
    return Field(f.grid, np.minimum(f.values, g.values))


def set_intersect(f, g):
    """Pointwise max: intersection of the zero sublevel sets."""
    _check_same_grid(f, g)
    return Field(f.grid, np.maximum(f.values, g.values))


def set_complement(f):
    """Pointwise negation: complement of the zero sublevel set."""
    return Field(f.grid, -f.values)


def _dilate_slice(vals2d, spacing, r):
    """Exact node signed distance to the sublevel node set, minus r."""
    inside = vals2d <= 0.0
    if not inside.any():
        return np.full(vals2d.shape, LARGE)
    d_out = ndimage.distance_transform_edt(~inside, sampling=spacing)
    d_in = ndimage.distance_transform_edt(inside, sampling=spacing)
    return np.where(inside, -d_in, d_out) - r


def dilate_positions(f, r):
    """Expand the set by radius r in the position plane (per non-position slice).

    Exact-SDF inputs take the value-shift shortcut; everything else gets a true
    signed distance rebuilt from the sublevel node set via an exact Euclidean
    distance transform, so non-distance inputs (e.g. value-function slices)
    dilate soundly.
    """
    if r < 0:
        raise GridError("dilation radius must be nonnegative")
    if f.is_sdf:
        return Field(f.grid, f.values - r, is_sdf=True)
    g = f.grid
    sp = g.spacing[:2]
    vals = f.values
    if g.dim == 2:
        out = _dilate_slice(vals, sp, r)
    else:
        flat = vals.reshape(vals.shape[0], vals.shape[1], -1)
        out = np.empty_like(flat)
        for s in range(flat.shape[2]):
            out[:, :, s] = _dilate_slice(flat[:, :, s], sp, r)
        out = out.reshape(vals.shape)
    return Field(g, out, is_sdf=True)


def project_min_nonposition(f3d):
    """Min over all non-position slices: position-plane shadow of the set."""
    g = f3d.grid
    if g.dim < 3:
        raise GridError("projection expects a grid with non-position dimensions")
    vals = f3d.values.min(axis=tuple(range(2, g.dim)))
    return Field(g.position_subgrid(), vals)


def extend_to_state_space(f2d, grid3d):
    """Replicate a position-plane field over the non-position dimensions."""
    if grid3d.position_subgrid() != f2d.grid:
        raise GridError("position sub-grid mismatch")
    shape = f2d.values.shape + (1,) * (grid3d.dim - 2)
    vals = np.broadcast_to(f2d.values.reshape(shape), grid3d.shape).copy()
    return Field(grid3d, vals, is_sdf=f2d.is_sdf)


def _locate(grid, x):
    """Base index, neighbor index, and fractional offset per dimension."""
    base, nbr, frac = [], [], []
    for k in range(grid.dim):
        h = grid.spacing[k]
        n = grid.counts[k]
        u = (x[k] - grid.mins[k]) / h
        if grid.periodic[k]:
            i = math.floor(u)
            frac.append(u - i)
            base.append(i % n)
            nbr.append((i + 1) % n)
        else:
            if u < -1e-9 or u > n - 1 + 1e-9:
                raise OutOfDomainError(f"coordinate {x[k]} outside dimension {k}")
            u = min(max(u, 0.0), float(n - 1))
            i = min(int(u), n - 2)
            base.append(i)
            nbr.append(i + 1)
            frac.append(u - i)
    return base, nbr, frac


def _interp(values, base, nbr, frac):
    dim = len(base)
    acc = 0.0
    for corner in itertools.product((0, 1), repeat=dim):
        w = 1.0
        idx = []
        for k, c in enumerate(corner):
            w *= frac[k] if c else (1.0 - frac[k])
            idx.append(nbr[k] if c else base[k])
        if w:
            acc += w * values[tuple(idx)]
    return acc


def sample(f, x):
    """Multilinear interpolation of f at state x (periodic dims wrap)."""
    base, nbr, frac = _locate(f.grid, x)
    return _interp(f.values, base, nbr, frac)


def _node_gradient(grid, values, k):
    h = grid.spacing[k]
    if grid.periodic[k]:
        return (np.roll(values, -1, axis=k) - np.roll(values, 1, axis=k)) / (2 * h)
    g = np.empty_like(values)
    sl = [slice(None)] * grid.dim

    def at(i):
        s = sl.copy()
        s[k] = i
        return tuple(s)

    g[at(slice(1, -1))] = (values[at(slice(2, None))] - values[at(slice(0, -2))]) / (2 * h)
    g[at(0)] = (values[at(1)] - values[at(0)]) / h
    g[at(-1)] = (values[at(-1)] - values[at(-2)]) / h
    return g


def sample_gradient(f, x):
    """Interpolated central-difference gradient of f at state x."""
    base, nbr, frac = _locate(f.grid, x)
    grads = f.gradient_fields()
    return np.array([_interp(grads[k], base, nbr, frac) for k in range(f.grid.dim)])
