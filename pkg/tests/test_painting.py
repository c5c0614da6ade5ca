import math

import numpy as np
import pytest

from spnet.exceptions import ClassOutOfRange
from spnet.geometry import OrientedBox3D, PointCloud
from spnet.painting import assign_boxes, paint_categorical, paint_onehot
from spnet.synth import brute_force_paint

from conftest import random_boxes


def _loop_oracle(xyz, boxes):
    """Pure-Python O(N*B): every (point, box) pair, then (area, index) tie rule."""
    out = []
    for p in xyz:
        best = None
        for j, b in enumerate(boxes):
            c, s = math.cos(b.yaw), math.sin(b.yaw)
            dx, dy, dz = p[0] - b.center[0], p[1] - b.center[1], p[2] - b.center[2]
            lx, ly = c * dx + s * dy, -s * dx + c * dy
            if abs(lx) <= b.dims[0] / 2 and abs(ly) <= b.dims[1] / 2 and abs(dz) <= b.dims[2] / 2:
                key = (b.dims[0] * b.dims[1], j)
                if best is None or key < best[0]:
                    best = (key, b.class_code)
        out.append(0 if best is None else best[1])
    return np.array(out)


def _cloud(rng, n, spread=5.0):
    pts = np.zeros((n, 4), dtype=np.float32)
    pts[:, :3] = rng.uniform(-spread, spread, (n, 3)) * (1, 1, 0.4)
    pts[:, 3] = rng.random(n)
    return PointCloud(pts)


def test_no_boxes_all_background(rng):
    painted = paint_categorical(_cloud(rng, 50), [])
    assert painted.values.shape == (50, 5)
    assert not painted.paint.any()


def test_car_center_is_one():
    box = OrientedBox3D((3, 1, -1), (4, 2, 1.5), 0.4, class_code=1)
    painted = paint_categorical(np.array([[3, 1, -1, 0.2]]), [box])
    assert painted.paint[0, 0] == 1


def test_overlapping_scene_matches_loop_oracle():
    rng = np.random.default_rng(3)
    boxes = random_boxes(rng, 3, spread=0.8)
    cloud = _cloud(rng, 1000, spread=2.5)
    got = paint_categorical(cloud, boxes).labels()
    expected = _loop_oracle(cloud.xyz, boxes)
    np.testing.assert_array_equal(got, expected)
    assert np.count_nonzero(expected) > 50


def test_smallest_footprint_wins():
    big = OrientedBox3D((0, 0, 0), (10, 10, 3), 0.0, class_code=1)
    small = OrientedBox3D((0, 0, 0), (1, 1, 3), 0.0, class_code=2)
    painted = paint_categorical(np.array([[0, 0, 0, 0], [4, 4, 0, 0]]), [big, small])
    np.testing.assert_array_equal(painted.labels(), [2, 1])


def test_tie_goes_to_lowest_index():
    a = OrientedBox3D((0, 0, 0), (2, 1, 2), 0.0, class_code=3)
    b = OrientedBox3D((0, 0, 0), (1, 2, 2), 0.0, class_code=2)
    painted = paint_categorical(np.array([[0, 0, 0, 0]]), [a, b])
    assert painted.labels()[0] == 3
    painted = paint_categorical(np.array([[0, 0, 0, 0]]), [b, a])
    assert painted.labels()[0] == 2


def test_onehot_car_row():
    box = OrientedBox3D((0, 0, 0), (4, 2, 2), 0.0, class_code=1)
    painted = paint_onehot(np.array([[0, 0, 0, 0.5], [30, 0, 0, 0.5]]), [box], num_classes=3)
    np.testing.assert_array_equal(painted.paint[0], [0, 1, 0, 0])
    np.testing.assert_array_equal(painted.paint[1], [1, 0, 0, 0])
    assert painted.values.shape == (2, 8)


def test_onehot_class_out_of_range():
    box = OrientedBox3D((0, 0, 0), (1, 1, 1), 0.0, class_code=4)
    with pytest.raises(ClassOutOfRange):
        paint_onehot(np.zeros((1, 4)), [box], num_classes=3)


@pytest.mark.parametrize("seed", range(10))
def test_onehot_argmax_equals_categorical(seed):
    rng = np.random.default_rng(seed)
    boxes = random_boxes(rng, 8, spread=2.0)
    cloud = _cloud(rng, 2000, spread=4.0)
    cat = paint_categorical(cloud, boxes)
    hot = paint_onehot(cloud, boxes, num_classes=3)
    np.testing.assert_array_equal(np.argmax(hot.paint, axis=1), cat.paint[:, 0])
    assert np.all(hot.paint.sum(axis=1) == 1)
    # and back: indexing the one-hot row by the categorical code picks the set slot
    assert np.all(hot.paint[np.arange(len(cat.paint)), cat.paint[:, 0].astype(int)] == 1)


def test_permutation_stable(rng):
    boxes = random_boxes(rng, 6, spread=1.5)
    cloud = _cloud(rng, 500, spread=3.0)
    perm = rng.permutation(500)
    a = paint_categorical(cloud, boxes).labels()
    b = paint_categorical(PointCloud(cloud.values[perm]), boxes).labels()
    np.testing.assert_array_equal(a[perm], b)


def test_empty_box_does_not_change_paint(rng):
    boxes = random_boxes(rng, 6, spread=1.5)
    cloud = _cloud(rng, 500, spread=3.0)
    far = OrientedBox3D((500, 500, 0), (1, 1, 1), 0.0, class_code=2)
    np.testing.assert_array_equal(
        paint_categorical(cloud, boxes).paint, paint_categorical(cloud, boxes + [far]).paint)


def test_bruteforce_oracle_agrees_with_loop_oracle():
    rng = np.random.default_rng(11)
    boxes = random_boxes(rng, 5, spread=1.0)
    cloud = _cloud(rng, 400, spread=2.5)
    np.testing.assert_array_equal(brute_force_paint(cloud.xyz, boxes), _loop_oracle(cloud.xyz, boxes))


def test_assign_boxes_background_index():
    assert list(assign_boxes(np.zeros((2, 3)), [])) == [-1, -1]
