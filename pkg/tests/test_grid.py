"""Grid, field, and set-operation tests.

Oracle notes: signed-distance values are checked against closed-form
point-to-set distances; dilation is checked against a brute-force maximum
over a disk of cells.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spp import grid as G


def small_grid():
    return G.make_grid((-1.0, -1.0, 0.0), (1.0, 1.0, 2 * np.pi),
                       (21, 21, 12), (False, False, True))


def test_spacing_and_coords():
    g = small_grid()
    assert g.dim == 3
    # [TRIVIAL] non-periodic axes span inclusive endpoints
    assert np.isclose(g.spacing[0], 2.0 / 20)
    assert np.isclose(g.spacing[1], 2.0 / 20)
    # [TRIVIAL] periodic axis excludes the duplicate endpoint
    assert np.isclose(g.spacing[2], 2 * np.pi / 12)
    xs = g.axis_coords(0)
    assert xs.shape[0] == 21
    assert np.isclose(xs.min(), -1.0) and np.isclose(xs.max(), 1.0)


def test_disk_cylinder_exact_distance():
    g = small_grid()
    f = G.sdf_disk_cylinder(g, (0.2, -0.1), 0.3)
    assert f.is_sdf
    # [DERIVED] analytic signed distance at grid nodes
    X = g.axis_coords(0)
    Y = g.axis_coords(1)
    d = np.sqrt((X - 0.2) ** 2 + (Y + 0.1) ** 2) - 0.3
    assert np.allclose(f.values, np.broadcast_to(d, g.shape))


def test_axis_box_sign():
    g = small_grid()
    f = G.sdf_axis_box(g, (-0.5, -0.5), (0.0, 0.0))
    # [TRIVIAL] inside negative, outside positive
    assert G.sample(f, np.array([-0.25, -0.25, 0.0])) < 0
    assert G.sample(f, np.array([0.5, 0.5, 0.0])) > 0
    # [DERIVED] outside value is Euclidean distance to the box
    v = G.sample(f, np.array([0.5, 0.5, 0.0]))
    assert abs(v - np.sqrt(2) * 0.5) < 1e-9


def test_union_intersect_complement_pointwise():
    g = small_grid()
    a = G.sdf_disk_cylinder(g, (0.0, 0.0), 0.4)
    b = G.sdf_disk_cylinder(g, (0.3, 0.0), 0.4)
    assert np.array_equal(G.set_union(a, b).values,
                          np.minimum(a.values, b.values))
    assert np.array_equal(G.set_intersect(a, b).values,
                          np.maximum(a.values, b.values))
    assert np.array_equal(G.set_complement(a).values, -a.values)


def test_de_morgan_identity():
    g = small_grid()
    a = G.sdf_disk_cylinder(g, (0.1, 0.2), 0.3)
    b = G.sdf_axis_box(g, (-0.4, -0.4), (0.2, 0.1))
    lhs = G.set_complement(G.set_union(a, b))
    rhs = G.set_intersect(G.set_complement(a), G.set_complement(b))
    assert np.allclose(lhs.values, rhs.values)


def test_projection_extension_roundtrip():
    g = small_grid()
    f3 = G.sdf_disk_cylinder(g, (0.2, 0.2), 0.35)
    f2 = G.project_min_nonposition(f3)
    back = G.extend_to_state_space(f2, g)
    assert np.allclose(back.values, f3.values)
    # projection of an extension is the identity on the position plane
    assert np.allclose(G.project_min_nonposition(back).values, f2.values)


def test_dilate_against_bruteforce():
    g = G.make_grid((-1.0, -1.0), (1.0, 1.0), (41, 41), (False, False))
    f = G.sdf_axis_box(g, (-0.3, -0.2), (0.1, 0.3))
    r = 0.17
    d = G.dilate_positions(f, r)
    # [DERIVED] brute-force dilation: minimum of f over a disk of cells
    h = g.spacing[0]
    k = int(np.ceil(r / h))
    vals = f.values
    best = np.full_like(vals, np.inf)
    for di in range(-k, k + 1):
        for dj in range(-k, k + 1):
            if np.hypot(di * h, dj * g.spacing[1]) > r + 1e-12:
                continue
            shifted = np.full_like(vals, np.inf)
            si = slice(max(di, 0), vals.shape[0] + min(di, 0))
            ti = slice(max(-di, 0), vals.shape[0] + min(-di, 0))
            sj = slice(max(dj, 0), vals.shape[1] + min(dj, 0))
            tj = slice(max(-dj, 0), vals.shape[1] + min(-dj, 0))
            shifted[si, sj] = vals[ti, tj]
            best = np.minimum(best, shifted)
    # membership agrees within one cell diagonal away from the domain border
    # (interior values may differ: both encodings represent the same set)
    inner = (slice(2, -2), slice(2, -2))
    tol = np.hypot(h, g.spacing[1]) + 1e-9
    assert np.all(d.values[inner][best[inner] <= 0] <= tol)
    assert np.all(best[inner][d.values[inner] <= -tol] <= 0)


def test_dilate_sdf_is_value_shift():
    g = G.make_grid((-1.0, -1.0), (1.0, 1.0), (41, 41), (False, False))
    f = G.sdf_disk_cylinder(
        G.make_grid((-1.0, -1.0, 0.0), (1.0, 1.0, 2 * np.pi), (41, 41, 8),
                    (False, False, True)), (0.0, 0.0), 0.2)
    d = G.dilate_positions(f, 0.15)
    # [TRIVIAL] exact signed distance dilates by subtracting the radius
    assert np.allclose(d.values, f.values - 0.15)


def test_sample_trilinear_matches_linear_function():
    g = small_grid()
    X = g.axis_coords(0)
    Y = g.axis_coords(1)
    vals = np.broadcast_to(2.0 * X - 0.5 * Y + 0.25, g.shape).copy()
    f = G.Field(g, vals)
    for p in [(-0.33, 0.41, 1.0), (0.017, -0.9, 3.3), (0.5, 0.5, 0.1)]:
        x = np.array(p)
        # [DERIVED] multilinear interpolation reproduces affine functions
        assert abs(G.sample(f, x) - (2.0 * x[0] - 0.5 * x[1] + 0.25)) < 1e-12


def test_sample_periodic_wrap():
    g = small_grid()
    th = g.axis_coords(2)
    vals = np.broadcast_to(np.cos(th), g.shape).copy()
    f = G.Field(g, vals)
    a = G.sample(f, np.array([0.0, 0.0, 0.1]))
    b = G.sample(f, np.array([0.0, 0.0, 0.1 + 2 * np.pi]))
    assert abs(a - b) < 1e-12


def test_out_of_domain_raises():
    g = small_grid()
    f = G.absent_field(g)
    with pytest.raises(G.OutOfDomainError):
        G.sample(f, np.array([2.0, 0.0, 0.0]))


def test_time_field_interpolation():
    g = small_grid()
    a = G.Field(g, np.zeros(g.shape))
    b = G.Field(g, np.ones(g.shape))
    tf = G.TimeField(np.array([0.0, 1.0]), [a, b])
    # [TRIVIAL] clamped outside, linear inside
    assert np.all(tf.at_time(-5.0).values == 0.0)
    assert np.all(tf.at_time(5.0).values == 1.0)
    assert np.allclose(tf.at_time(0.25).values, 0.25)


@settings(max_examples=25, deadline=None)
@given(cx=st.floats(-0.5, 0.5), cy=st.floats(-0.5, 0.5),
       r=st.floats(0.05, 0.4))
def test_disk_membership_property(cx, cy, r):
    g = G.make_grid((-1.0, -1.0, 0.0), (1.0, 1.0, 2 * np.pi), (31, 31, 8),
                    (False, False, True))
    f = G.sdf_disk_cylinder(g, (cx, cy), r)
    X = np.broadcast_to(g.axis_coords(0), g.shape)
    Y = np.broadcast_to(g.axis_coords(1), g.shape)
    dist = np.sqrt((X - cx) ** 2 + (Y - cy) ** 2)
    clear = np.abs(dist - r) > 1e-9  # skip exact-boundary float ties
    assert np.array_equal((f.values <= 0)[clear], (dist <= r)[clear])
