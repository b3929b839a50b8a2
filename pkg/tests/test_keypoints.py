import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopfuse.errors import InvalidArgument
from coopfuse.geometry import BBox7, Pose2, transform_box, transform_points
from coopfuse.keypoints import (
    KeypointSet, SelectConfig, fps_sample, points_in_boxes, select_correction_points,
    synthetic_features,
)
from coopfuse.localization import LandmarkClass, LandmarkPoint
from oracles import brute_force_max_min_subset


def min_pairwise(pts):
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    return d[np.triu_indices(len(pts), 1)].min()


def test_fps_trivial():
    pts = np.random.default_rng(0).uniform(size=(5, 3))
    assert list(fps_sample(pts, 5)) == list(range(5))
    assert list(fps_sample(pts, 9)) == list(range(5))
    far = int(np.argmax(((pts - pts.mean(0)) ** 2).sum(1)))
    assert list(fps_sample(pts, 1)) == [far]


def test_fps_rejects_bad_input():
    with pytest.raises(InvalidArgument):
        fps_sample(np.zeros((0, 3)), 2)
    with pytest.raises(InvalidArgument):
        fps_sample(np.zeros((3, 3)), 0)


def test_fps_square_corners_diagonal():
    sq = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    idx = sorted(fps_sample(sq, 2))
    assert idx in ([0, 2], [1, 3])
    _, best = brute_force_max_min_subset(sq, 2)
    assert min_pairwise(sq[idx]) == pytest.approx(best)


def test_fps_on_line_picks_endpoints():
    line = np.column_stack([np.linspace(0, 10, 100), np.zeros(100)])
    assert sorted(fps_sample(line, 2)) == [0, 99]


@settings(max_examples=100)
@given(st.integers(0, 2**31), st.integers(1, 40), st.integers(1, 60))
def test_fps_size_and_distinct(seed, n, m):
    pts = np.random.default_rng(seed).normal(size=(m, 3))
    idx = fps_sample(pts, n)
    assert len(idx) == min(n, m)
    assert len(set(idx.tolist())) == len(idx)


def test_fps_beats_random_subsets():
    fps_better = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-20, 20, (200, 3))
        k = 16
        chosen = min_pairwise(pts[fps_sample(pts, k)])
        rand = np.median([min_pairwise(pts[rng.choice(200, k, replace=False)]) for _ in range(20)])
        fps_better += chosen >= rand
    assert fps_better == 100


def test_fps_small_sets_near_optimal():
    # greedy FPS is a 2-approximation of the max-min subset
    for seed in range(20):
        pts = np.random.default_rng(seed).uniform(size=(9, 2))
        got = min_pairwise(pts[fps_sample(pts, 3)])
        assert got >= brute_force_max_min_subset(pts, 3)[1] / 2 - 1e-12


def test_points_in_boxes_examples():
    b = BBox7(2.0, 1.0, 1.0, 2.0, 4.0, 2.0, 0.6)
    axis = np.array([math.cos(b.r), math.sin(b.r)])
    side = np.array([-math.sin(b.r), math.cos(b.r)])
    center = np.array([b.x, b.y])
    pts = np.array([
        [*center, 1.0],
        [*(center + 2 * b.l * axis), 1.0],
        [*(center + b.l / 2 * axis), 1.0],       # front edge
        [*(center + b.w / 2 * side), 1.0],       # side edge
        [*center, 2.0],                          # top face
        [*center, 2.1],                          # above
    ])
    assert list(points_in_boxes(pts, [b])) == [0, 2, 3, 4]
    assert len(points_in_boxes(pts, [])) == 0


@settings(max_examples=100)
@given(st.integers(0, 2**31), st.floats(-50, 50), st.floats(-50, 50), st.floats(-7, 7))
def test_points_in_boxes_rigid_invariance(seed, tx, ty, yaw):
    rng = np.random.default_rng(seed)
    boxes = [BBox7(*rng.uniform(-10, 10, 2), 0.0, *rng.uniform(1, 5, 3), rng.uniform(-3, 3))
             for _ in range(3)]
    pts = np.column_stack([rng.uniform(-12, 12, (300, 2)), rng.uniform(-2, 2, 300)])
    o, p = Pose2.origin(), Pose2(tx, ty, yaw)
    moved_pts = transform_points(pts, o, p)
    moved_boxes = [transform_box(b, o, p) for b in boxes]
    a = set(points_in_boxes(pts, boxes).tolist())
    b = set(points_in_boxes(moved_pts, moved_boxes).tolist())
    # only points within the containment margin of a face may disagree
    for i in a ^ b:
        near = False
        for bx in boxes:
            c, s = math.cos(bx.r), math.sin(bx.r)
            dx, dy = pts[i, 0] - bx.x, pts[i, 1] - bx.y
            u, v = c * dx + s * dy, -s * dx + c * dy
            gaps = (abs(abs(u) - bx.l / 2), abs(abs(v) - bx.w / 2), abs(abs(pts[i, 2] - bx.z) - bx.h / 2))
            near |= min(gaps) <= 1e-8
        assert near


def lm(x, y, cls):
    return LandmarkPoint(float(x), float(y), cls)


def test_select_correction_points():
    poles = [lm(i, 0, LandmarkClass.POLE) for i in range(5)]
    cars = [lm(0, i, LandmarkClass.VEHICLE_CENTER) for i in range(3)]
    assert select_correction_points(poles + cars, 16, 32) == poles + cars
    fence = [lm(x, 3.0, LandmarkClass.WALL_FENCE) for x in np.linspace(0, 20, 100)]
    out = select_correction_points(fence, 16, 2)
    assert [p.x for p in out] == [0.0, 20.0]
    assert select_correction_points([], 16, 32) == []
    many = [lm(*xy, LandmarkClass.POLE) for xy in np.random.default_rng(1).uniform(0, 50, (40, 2))]
    assert len(select_correction_points(many + cars, 16, 32)) == 16 + 3


def test_keypoint_set_validation():
    with pytest.raises(InvalidArgument):
        KeypointSet(np.zeros((3, 3)), np.zeros((2, 4)))
    assert KeypointSet.empty(8).n_ch == 8
    with pytest.raises(InvalidArgument):
        SelectConfig(n_ch=0)


def test_synthetic_features_deterministic_and_bounded():
    pts = np.random.default_rng(2).uniform(-40, 40, (500, 3))
    a = synthetic_features(pts, 32)
    assert a.shape == (500, 32)
    assert (a >= 0).all() and (a < 1).all()
    assert np.array_equal(a, synthetic_features(pts.copy(), 32))
    assert np.array_equal(synthetic_features(pts, 64)[:, :32], a)
    # roughly uniform
    assert abs(a.mean() - 0.5) < 0.01
