import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omavtraj.corridor import (
    Corridor,
    DecompositionError,
    GridIndex,
    NoPathError,
    PointCloud,
    RRTConfig,
    SFCConfig,
    corridor_from_path,
    decompose,
    rrt_search,
    shortcut,
    split_long_segments,
    validate,
)
from omavtraj.polytope import contains, interior_point, intersect
from omavtraj.scenarios import random_boxes, slot_wall


def brute_clear(cloud, a, b, r, res=0.01):
    n = int(np.ceil(np.linalg.norm(b - a) / res)) + 1
    pts = a + np.linspace(0, 1, n)[:, None] * (b - a)
    if not len(cloud.points):
        return True
    d = np.linalg.norm(cloud.points[None] - pts[:, None], axis=2)
    return bool(np.all(d > r - 1e-9))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 1.0))
def test_grid_query_matches_brute_force(seed, radius):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, size=(300, 3))
    g = GridIndex(pts, 0.2)
    c = rng.uniform(-1, 1, 3)
    got = np.sort(g.query_ball(c, radius))
    want = np.nonzero(np.linalg.norm(pts - c, axis=1) <= radius)[0]
    np.testing.assert_array_equal(got, want)


def test_empty_map_straight_line():
    cloud = PointCloud(np.zeros((0, 3)), [-1, -1, 0], [3, 1, 2])
    path = rrt_search(cloud, [0, 0, 1], [2, 0, 1], RRTConfig())
    np.testing.assert_allclose(path, [[0, 0, 1], [2, 0, 1]])
    cor = decompose(path, cloud, SFCConfig())
    assert len(cor.polys) == 1 and validate(cor, cloud) == []


def test_rrt_path_is_collision_free_and_deterministic():
    cloud = slot_wall()
    cfg = RRTConfig(seed=3, radius=0.21)
    p1 = rrt_search(cloud, [-3, 0, 1.5], [3, 0, 1.5], cfg)
    p2 = rrt_search(cloud, [-3, 0, 1.5], [3, 0, 1.5], cfg)
    np.testing.assert_array_equal(p1, p2)
    np.testing.assert_allclose(p1[0], [-3, 0, 1.5])
    np.testing.assert_allclose(p1[-1], [3, 0, 1.5])
    for a, b in zip(p1[:-1], p1[1:]):
        assert brute_clear(cloud, a, b, 0.2)
    sc = shortcut(p1, cloud, 0.21)
    assert len(sc) <= len(p1)
    for a, b in zip(sc[:-1], sc[1:]):
        assert brute_clear(cloud, a, b, 0.2)


def test_start_in_collision():
    cloud = slot_wall()
    with pytest.raises(NoPathError):
        rrt_search(cloud, [0.0, 1.5, 1.5], [3, 0, 1.5], RRTConfig())
    with pytest.raises(NoPathError):
        rrt_search(cloud, [-3, 0, 1.5], [9, 0, 1.5], RRTConfig())


def test_unreachable_goal_exhausts():
    g = np.round(np.arange(-1, 1.0001, 0.1), 9)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    P = np.c_[X.ravel(), Y.ravel(), Z.ravel()]
    P = P[np.any(np.isclose(np.abs(P), 1.0), axis=1)]
    cloud = PointCloud(P, [-3, -3, -3], [3, 3, 3])
    with pytest.raises(NoPathError) as e:
        rrt_search(cloud, [0, 0, 0], [2.5, 0, 0], RRTConfig(max_iter=500))
    assert e.value.n_nodes >= 1


def test_split_long_segments():
    path = np.array([[0, 0, 0], [5, 0, 0], [5, 1, 0.0]])
    out = split_long_segments(path, 2.0)
    L = np.linalg.norm(np.diff(out, axis=0), axis=1)
    assert np.all(L <= 2.0 + 1e-12)
    np.testing.assert_allclose(out[[0, -1]], path[[0, -1]])
    assert len(out) == 1 + 3 + 1


def test_slot_wall_corridor_brute_force():
    cloud = slot_wall()
    cor = corridor_from_path([-3, 0, 1.5], [3, 0, 1.5], cloud, RRTConfig(), SFCConfig())
    assert validate(cor, cloud) == []
    for i, P in enumerate(cor.polys):
        # no cloud point strictly inside any polytope
        assert not np.any(np.all(cloud.points @ P.A.T - P.b < -1e-9, axis=1))
        assert contains(P, cor.path[i], 1e-9) and contains(P, cor.path[i + 1], 1e-9)
    for P, Q in zip(cor.polys[:-1], cor.polys[1:]):
        assert interior_point(intersect(P, Q)) is not None


def test_random_boxes_corridor():
    cloud, start, goal = random_boxes(8.0, seed=4)
    cor = corridor_from_path(start, goal, cloud, RRTConfig(seed=4), SFCConfig())
    assert validate(cor, cloud) == []


def test_face_budget_exhausted():
    cloud = slot_wall()
    path = np.array([[-3, 0, 1.5], [3, 0, 1.5]])
    with pytest.raises(DecompositionError):
        decompose(path, cloud, SFCConfig(max_faces=7))


def test_corridor_json_round_trip():
    cloud = slot_wall()
    cor = corridor_from_path([-3, 0, 1.5], [3, 0, 1.5], cloud, RRTConfig(), SFCConfig())
    text = json.dumps(cor.to_json())
    assert json.dumps(Corridor.from_json(json.loads(text)).to_json()) == text


def test_point_cloud_validation():
    with pytest.raises(ValueError):
        PointCloud(np.array([[np.nan, 0, 0]]), [-1, -1, -1], [1, 1, 1])
    with pytest.raises(ValueError):
        PointCloud(np.zeros((0, 3)), [1, 1, 1], [0, 0, 0])
    c = PointCloud(np.array([[5.0, 0, 0], [0, 0, 0]]), [-1, -1, -1], [1, 1, 1])
    assert len(c.points) == 1
