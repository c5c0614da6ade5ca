import math

import numpy as np
import pytest

from spnet.bevgrid import (
    GridSpec,
    MaskStack,
    compress_bev,
    expand_bev,
    parse_grid,
    pgm_bytes,
    pillarize,
    point_cells,
    rasterize_class_masks,
    read_pgm,
)
from spnet.exceptions import GridDegenerate, RankMismatch, SPNetError
from spnet.geometry import OrientedBox3D, box_bev_footprint
from spnet.painting import paint_categorical

SMALL = GridSpec((0, 6.4), (-3.2, 3.2), (-3, 1), (0.1, 0.1, 4))


def test_kitti_grid_shape():
    grid = GridSpec.kitti()
    assert grid.shape == (496, 432, 1)
    vol = pillarize(np.zeros((0, 4), dtype=np.float32), grid)
    assert vol.shape == (496, 432, 1, 4)
    assert not vol.any()


@pytest.mark.parametrize("text", ["0:1:0,0:1:1,0:1:1", "0:1:0.3,0:1:1,0:1:1", "1:0:1,0:1:1,0:1:1", "0:1,0:1:1,0:1:1", "a:b:c,0:1:1,0:1:1"])
def test_degenerate_grids(text):
    with pytest.raises(GridDegenerate):
        parse_grid(text)


def _cell_oracle(points, grid, h, w, d):
    """Brute-force accumulator for one cell using explicit boundary comparisons."""
    (x0, _), (y0, _), (z0, z1) = grid.x_range, grid.y_range, grid.z_range
    dx, dy, dz = grid.cell
    sel = []
    for p in points:
        inx = x0 + w * dx <= p[0] < x0 + (w + 1) * dx
        iny = y0 + h * dy <= p[1] < y0 + (h + 1) * dy
        inz = z0 + d * dz <= p[2] < z0 + (d + 1) * dz
        if inx and iny and inz:
            sel.append(p)
    if not sel:
        return np.zeros(4)
    sel = np.array(sel, dtype=np.float64)
    n = len(sel)
    fg = sum(1.0 for p in sel if p[4] > 0)
    return np.array([min(n / 100, 1.0), (sum(sel[:, 2]) / n - z0) / (z1 - z0), sum(sel[:, 3]) / n, fg / n])


def test_pillar_features_match_accumulator():
    rng = np.random.default_rng(0)
    # 10 points inside cell (h=12, w=20): x in [2.0, 2.1), y in [-2.0, -1.9)
    pts = np.zeros((10, 5), dtype=np.float32)
    pts[:, 0] = rng.uniform(2.01, 2.09, 10)
    pts[:, 1] = rng.uniform(-1.99, -1.91, 10)
    pts[:, 2] = rng.uniform(-2, 0, 10)
    pts[:, 3] = rng.random(10)
    pts[:4, 4] = 1
    vol = pillarize(pts, SMALL)
    expected = _cell_oracle(pts, SMALL, 12, 20, 0)
    np.testing.assert_allclose(vol[12, 20, 0], expected, rtol=1e-12)
    assert expected[0] == 0.1 and expected[3] == 0.4
    assert np.count_nonzero(vol[..., 0]) == 1


def test_pillar_features_random_cells():
    rng = np.random.default_rng(2)
    pts = np.zeros((300, 5), dtype=np.float32)
    pts[:, 0] = rng.uniform(0, 0.5, 300)
    pts[:, 1] = rng.uniform(-3.2, -2.7, 300)
    pts[:, 2] = rng.uniform(-3, 1, 300)
    pts[:, 3] = rng.random(300)
    pts[:, 4] = rng.integers(0, 3, 300)
    vol = pillarize(pts, SMALL)
    for h in range(5):
        for w in range(5):
            np.testing.assert_allclose(vol[h, w, 0], _cell_oracle(pts, SMALL, h, w, 0), rtol=1e-12, atol=1e-15)


def test_boundary_points_go_to_upper_cell():
    grid = GridSpec((0, 4), (0, 4), (0, 4), (1, 1, 4))
    xyz = np.array([[1.0, 2.0, 0.5], [4.0, 4.0, 4.0], [0.0, 0.0, 0.0], [-0.1, 0, 0], [4.1, 0, 0]])
    cells = point_cells(xyz, grid)
    assert cells[0] == (2 * 4 + 1)  # h=2, w=1
    assert cells[1] == 3 * 4 + 3
    assert cells[2] == 0
    assert list(cells[3:]) == [-1, -1]


def test_pillarize_point_order_invariant():
    rng = np.random.default_rng(9)
    pts = np.zeros((2000, 5), dtype=np.float32)
    pts[:, 0] = rng.uniform(0, 1, 2000)
    pts[:, 1] = rng.uniform(-0.5, 0.5, 2000)
    pts[:, 2] = rng.uniform(-3, 1, 2000)
    pts[:, 3] = rng.random(2000)
    pts[:, 4] = rng.integers(0, 2, 2000)
    a = pillarize(pts, SMALL)
    b = pillarize(pts[rng.permutation(2000)], SMALL)
    assert a.tobytes() == b.tobytes()


def test_pillarize_painted_cloud():
    box = OrientedBox3D((1.05, 0.05, -1), (0.1, 0.1, 4), 0.0, 1)
    pts = np.array([[1.05, 0.05, -1, 0.5], [1.06, 0.06, -1, 0.5]], dtype=np.float32)
    painted = paint_categorical(pts, [box])
    vol = pillarize(painted, SMALL)
    assert vol[32, 10, 0, 3] == 1.0
    assert pillarize(pts, SMALL)[32, 10, 0, 3] == 0.0


def test_compress_bev_index():
    v = np.arange(2 * 2 * 3 * 4, dtype=np.float64).reshape(2, 2, 3, 4)
    out = compress_bev(v)
    assert out.shape == (2, 2, 12)
    assert out[0, 0, 6] == v[0, 0, 1, 2]
    assert expand_bev(out, 3).tobytes() == v.tobytes()
    assert sorted(out.ravel()) == sorted(v.ravel())


def test_compress_depth_one():
    v = np.random.default_rng(0).normal(size=(3, 4, 1, 5))
    np.testing.assert_array_equal(compress_bev(v), v[:, :, 0, :])


def test_compress_rank_mismatch():
    with pytest.raises(RankMismatch):
        compress_bev(np.zeros((2, 2, 2)))


GRID64 = GridSpec((0, 6.4), (0, 6.4), (-3, 1), (0.1, 0.1, 4))


def test_no_boxes():
    masks = rasterize_class_masks([], GRID64, 3)
    assert not masks.per_class_fg.any()
    assert masks.agg_bg.all()


def test_three_by_three_block():
    # edges on cell boundaries 1.0 and 1.3 cover centers 1.05, 1.15, 1.25
    box = OrientedBox3D((1.15, 2.15, 0), (0.3, 0.3, 1), 0.0, 2)
    masks = rasterize_class_masks([box], GRID64, 3)
    assert masks.per_class_fg[1].sum() == 9
    assert masks.per_class_fg[1][20:23, 10:13].all()
    assert masks.agg_fg.sum() == 9


def _polygon_oracle(boxes, grid, num_classes):
    """Per-cell half-plane test against the footprint polygon."""
    xs, ys = grid.cell_centers()
    H, W, _ = grid.shape
    fg = np.zeros((num_classes, H, W), dtype=np.uint8)
    gx, gy = np.meshgrid(xs, ys)
    for b in boxes:
        corners = box_bev_footprint(b)
        inside = np.ones((H, W), dtype=bool)
        for i in range(4):
            (x1, y1), (x2, y2) = corners[i], corners[(i + 1) % 4]
            cross = (x2 - x1) * (gy - y1) - (y2 - y1) * (gx - x1)
            inside &= cross >= 0
        fg[b.class_code - 1] |= inside
    return fg


@pytest.mark.parametrize("seed", range(5))
def test_rotated_boxes_match_polygon_oracle(seed):
    rng = np.random.default_rng(seed)
    boxes = [OrientedBox3D((rng.uniform(0, 6.4), rng.uniform(0, 6.4), 0),
                           (rng.uniform(0.3, 3), rng.uniform(0.3, 2), 1),
                           rng.uniform(-math.pi, math.pi), int(rng.integers(1, 4)))
             for _ in range(6)]
    masks = rasterize_class_masks(boxes, GRID64, 3)
    np.testing.assert_array_equal(masks.per_class_fg, _polygon_oracle(boxes, GRID64, 3))


def test_rasterization_monotone():
    rng = np.random.default_rng(4)
    boxes = []
    prev = rasterize_class_masks(boxes, GRID64, 3)
    for _ in range(8):
        boxes.append(OrientedBox3D((rng.uniform(0, 6.4), rng.uniform(0, 6.4), 0), (1.5, 0.7, 1),
                                   rng.uniform(-3, 3), int(rng.integers(1, 4))))
        cur = rasterize_class_masks(boxes, GRID64, 3)
        assert np.all(cur.per_class_fg >= prev.per_class_fg)
        prev = cur


def test_mask_stack_invariants_and_tensor_roundtrip():
    rng = np.random.default_rng(1)
    masks = MaskStack.from_foreground(rng.random((3, 5, 7)) < 0.3)
    np.testing.assert_array_equal(masks.per_class_bg, 1 - masks.per_class_fg)
    np.testing.assert_array_equal(masks.agg_fg, masks.per_class_fg.max(axis=0))
    t = masks.to_tensor()
    assert t.shape == (8, 5, 7) and t.dtype == np.uint8
    back = MaskStack.from_tensor(t)
    np.testing.assert_array_equal(back.to_tensor(), t)


def test_mask_stack_rejects_broken_invariants():
    fg = np.zeros((1, 2, 2), dtype=np.uint8)
    with pytest.raises(SPNetError):
        MaskStack(fg, fg, np.zeros((2, 2)), np.ones((2, 2)))


def test_pgm():
    plane = np.array([[0, 1], [1, 0]], dtype=np.uint8)
    data = pgm_bytes(plane, binary=True)
    assert data.startswith(b"P5\n2 2\n255\n")
    np.testing.assert_array_equal(read_pgm(data), [[0, 255], [255, 0]])
    scaled = read_pgm(pgm_bytes(np.array([[1.0, 2.0], [3.0, 5.0]])))
    assert scaled.min() == 0 and scaled.max() == 255
    assert not read_pgm(pgm_bytes(np.full((2, 3), 7.0))).any()
