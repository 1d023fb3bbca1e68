import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regrid_uq.errors import InvalidArgument
from regrid_uq.grid import Grid, make_regular_grid, pairwise_distances, transform_grid


def test_regular_grid_2x2():
    g = make_regular_grid((0, 0), 20, 2, 2)
    assert g.points.tolist() == [[0, 0], [20, 0], [0, 20], [20, 20]]


def test_regular_grid_single_point():
    g = make_regular_grid((0, 0), 20, 1, 1)
    assert g.points.tolist() == [[0, 0]]


def test_regular_grid_row():
    g = make_regular_grid((5, 5), 10, 3, 1)
    assert g.points.tolist() == [[5, 5], [15, 5], [25, 5]]


@pytest.mark.parametrize("args", [((0, 0), 0, 2, 2), ((0, 0), -1, 2, 2), ((0, 0), 1, 0, 2)])
def test_regular_grid_rejects_bad_args(args):
    with pytest.raises(InvalidArgument):
        make_regular_grid(*args)


def test_grid_rejects_duplicates_and_empty():
    with pytest.raises(InvalidArgument):
        Grid(np.array([[0.0, 0.0], [0.0, 1e-12]]))
    with pytest.raises(InvalidArgument):
        Grid(np.zeros((0, 2)))
    with pytest.raises(InvalidArgument):
        Grid(np.array([[0.0, np.nan]]))


def test_transform_identity_and_translation():
    g = make_regular_grid((0, 0), 10, 3, 2)
    assert np.array_equal(transform_grid(g, 0, (0, 0)).points, g.points)
    assert np.allclose(transform_grid(g, 0, (3, 4)).points, g.points + [3, 4])


def test_two_quarter_turns_equal_half_turn():
    g = make_regular_grid((1, 2), 7, 3, 4)
    twice = transform_grid(transform_grid(g, math.pi / 2), math.pi / 2)
    once = transform_grid(g, math.pi)
    # point-by-point oracle: a half turn about the centroid reflects through it
    c = g.points.mean(axis=0)
    oracle = np.array([[2 * c[0] - x, 2 * c[1] - y] for x, y in g.points])
    assert np.allclose(twice.points, once.points, atol=1e-12)
    assert np.allclose(once.points, oracle, atol=1e-12)


def test_distance_examples():
    a = Grid(np.array([[0.0, 0.0]]))
    b = Grid(np.array([[3.0, 4.0]]))
    assert pairwise_distances(a, a)[0, 0] == 0.0
    assert pairwise_distances(a, b)[0, 0] == 5.0


def test_distance_matches_loop():
    rng = np.random.default_rng(3)
    a = Grid(rng.uniform(-50, 50, (6, 2)))
    b = Grid(rng.uniform(-50, 50, (4, 2)))
    d = pairwise_distances(a, b)
    for i in range(6):
        for j in range(4):
            ref = math.sqrt((a.points[i, 0] - b.points[j, 0]) ** 2 + (a.points[i, 1] - b.points[j, 1]) ** 2)
            assert abs(d[i, j] - ref) <= 1e-12


coords = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(coords, coords), min_size=2, max_size=12, unique=True),
       st.floats(-math.pi, math.pi), coords, coords)
def test_rigid_motion_preserves_distances(pts, rot, dx, dy):
    p = np.array(pts)
    if np.min(pairwise_distances_raw(p)) <= 1e-6:
        return
    g = Grid(p)
    h = transform_grid(g, rot, (dx, dy))
    assert len(h) == len(g)
    assert np.allclose(pairwise_distances(g, g), pairwise_distances(h, h), atol=1e-8)


def pairwise_distances_raw(p):
    d = np.sqrt(((p[:, None] - p[None]) ** 2).sum(-1))
    return d[~np.eye(len(p), dtype=bool)]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=10, unique=True))
def test_self_distance_symmetric_zero_diagonal(pts):
    p = np.array(pts)
    if len(p) > 1 and np.min(pairwise_distances_raw(p)) <= 1e-6:
        return
    g = Grid(p)
    d = pairwise_distances(g, g)
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0)
    assert np.all(d >= 0)
