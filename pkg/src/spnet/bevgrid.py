"""BEV gridding: pillar features, depth compression and class mask rasterization."""
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ClassOutOfRange, GridDegenerate, RankMismatch, SPNetError
from .geometry import PointCloud, box_bev_footprint, points_in_footprint
from .painting import PaintedCloud

NUM_PILLAR_FEATURES = 4
KITTI_GRID_STRING = "0:69.12:0.16,-39.68:39.68:0.16,-3:1:4"


def _cells(lo, hi, d, axis):
    if not (d > 0) or not (hi > lo):
        raise GridDegenerate(f"{axis} axis: range ({lo}, {hi}) with cell {d} is degenerate")
    n = round((hi - lo) / d)
    if n < 1 or abs(n * d - (hi - lo)) > 1e-9:
        raise GridDegenerate(f"{axis} extent {hi - lo} is not a multiple of cell size {d}")
    return int(n)


@dataclass(frozen=True)
class GridSpec:
    x_range: tuple
    y_range: tuple
    z_range: tuple
    cell: tuple  # (dx, dy, dz)

    def __post_init__(self):
        for name in ("x_range", "y_range", "z_range", "cell"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        # validates eagerly
        self.shape

    @classmethod
    def kitti(cls):
        return parse_grid(KITTI_GRID_STRING)

    @property
    def W(self):
        return _cells(*self.x_range, self.cell[0], "x")

    @property
    def H(self):
        return _cells(*self.y_range, self.cell[1], "y")

    @property
    def D(self):
        return _cells(*self.z_range, self.cell[2], "z")

    @property
    def shape(self):
        """(H, W, D)."""
        return self.H, self.W, self.D

    def cell_centers(self):
        """Cell-center x (length W) and y (length H) coordinates."""
        xs = self.x_range[0] + (np.arange(self.W) + 0.5) * self.cell[0]
        ys = self.y_range[0] + (np.arange(self.H) + 0.5) * self.cell[1]
        return xs, ys

    def to_string(self):
        parts = []
        for (lo, hi), d in zip((self.x_range, self.y_range, self.z_range), self.cell):
            parts.append(f"{lo:g}:{hi:g}:{d:g}")
        return ",".join(parts)


def parse_grid(text):
    """Parse ``"xmin:xmax:dx,ymin:ymax:dy,zmin:zmax:dz"``."""
    axes = text.split(",")
    if len(axes) != 3:
        raise GridDegenerate(f"grid string needs three axes, got {text!r}")
    ranges, cell = [], []
    for ax in axes:
        parts = ax.split(":")
        if len(parts) != 3:
            raise GridDegenerate(f"axis spec {ax!r} must be min:max:step")
        try:
            lo, hi, d = (float(p) for p in parts)
        except ValueError:
            raise GridDegenerate(f"axis spec {ax!r} is not numeric") from None
        ranges.append((lo, hi))
        cell.append(d)
    return GridSpec(ranges[0], ranges[1], ranges[2], tuple(cell))


def _axis_index(v, lo, hi, d, n):
    # Boundaries lo + k*d belong to the upper cell; hi itself goes to the last cell.
    idx = np.floor((v - lo) / d).astype(np.int64)
    idx = np.where(lo + (idx + 1) * d <= v, idx + 1, idx)
    idx = np.where(lo + idx * d > v, idx - 1, idx)
    return np.minimum(idx, n - 1)


def point_cells(xyz, grid):
    """Flat cell index (row-major over H, W, D) per point, -1 when out of range."""
    xyz = np.asarray(xyz, dtype=np.float64)
    H, W, D = grid.shape
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    ok = np.ones(len(xyz), dtype=bool)
    for v, (lo, hi) in ((x, grid.x_range), (y, grid.y_range), (z, grid.z_range)):
        ok &= (v >= lo) & (v <= hi)
    iw = _axis_index(x, *grid.x_range, grid.cell[0], W)
    ih = _axis_index(y, *grid.y_range, grid.cell[1], H)
    iz = _axis_index(z, *grid.z_range, grid.cell[2], D)
    flat = (ih * W + iw) * D + iz
    return np.where(ok, flat, -1)


def _foreground_flags(cloud):
    if isinstance(cloud, PaintedCloud):
        return cloud.foreground(), cloud.base.values
    if isinstance(cloud, PointCloud):
        values = cloud.values
        if "paint" in cloud.columns:
            return values[:, cloud.columns.index("paint")] > 0, values
        return np.zeros(len(values), dtype=bool), values
    values = np.asarray(cloud, dtype=np.float32)
    if values.ndim != 2 or values.shape[1] < 4:
        raise SPNetError(f"expected an N x 4+ point array, got shape {values.shape}")
    if values.shape[1] > 5:
        # one-hot paint: slot 0 is background
        return np.argmax(values[:, 4:], axis=1) > 0, values
    if values.shape[1] == 5:
        return values[:, 4] > 0, values
    return np.zeros(len(values), dtype=bool), values


def pillarize(cloud, grid):
    """Deterministic H x W x D x 4 stand-in features.

    Channels: min(count / 100, 1), mean z normalized to the z range, mean
    reflectance, foreground-point fraction. Sums are accumulated in a
    canonical per-cell order so the result does not depend on point order.
    """
    fg, values = _foreground_flags(cloud)
    H, W, D = grid.shape
    ncell = H * W * D
    cells = point_cells(values[:, :3], grid)
    keep = cells >= 0
    cells = cells[keep]
    z = values[keep, 2].astype(np.float64)
    r = values[keep, 3].astype(np.float64)
    f = fg[keep].astype(np.float64)
    order = np.lexsort((f, r, z, cells))
    cells, z, r, f = cells[order], z[order], r[order], f[order]

    count = np.bincount(cells, minlength=ncell).astype(np.float64)
    sz = np.bincount(cells, weights=z, minlength=ncell)
    sr = np.bincount(cells, weights=r, minlength=ncell)
    sf = np.bincount(cells, weights=f, minlength=ncell)

    out = np.zeros((ncell, NUM_PILLAR_FEATURES))
    occ = count > 0
    zlo, zhi = grid.z_range
    out[occ, 0] = np.minimum(count[occ] / 100.0, 1.0)
    out[occ, 1] = (sz[occ] / count[occ] - zlo) / (zhi - zlo)
    out[occ, 2] = sr[occ] / count[occ]
    out[occ, 3] = sf[occ] / count[occ]
    return out.reshape(H, W, D, NUM_PILLAR_FEATURES)


def compress_bev(v3d):
    """H x W x D x M -> H x W x (D*M), channel d*M + m."""
    v3d = np.asarray(v3d)
    if v3d.ndim != 4:
        raise RankMismatch(f"expected a rank-4 volume, got rank {v3d.ndim}")
    H, W, D, M = v3d.shape
    return v3d.reshape(H, W, D * M)


def expand_bev(v2d, depth):
    v2d = np.asarray(v2d)
    if v2d.ndim != 3:
        raise RankMismatch(f"expected a rank-3 BEV map, got rank {v2d.ndim}")
    H, W, K = v2d.shape
    if K % depth:
        raise RankMismatch(f"{K} channels do not split into depth {depth}")
    return v2d.reshape(H, W, depth, K // depth)


@dataclass(frozen=True)
class MaskStack:
    per_class_fg: np.ndarray  # C x H x W, uint8
    per_class_bg: np.ndarray
    agg_fg: np.ndarray  # H x W
    agg_bg: np.ndarray

    def __post_init__(self):
        fg = np.asarray(self.per_class_fg, dtype=np.uint8)
        if fg.ndim != 3:
            raise RankMismatch(f"per-class masks must be C x H x W, got {fg.shape}")
        for name in ("per_class_fg", "per_class_bg", "agg_fg", "agg_bg"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.uint8))
        if not (np.array_equal(self.per_class_bg, 1 - self.per_class_fg)
                and np.array_equal(self.agg_fg, np.any(self.per_class_fg, axis=0))
                and np.array_equal(self.agg_bg, 1 - self.agg_fg)):
            raise SPNetError("mask stack violates complement invariants")

    @classmethod
    def from_foreground(cls, per_class_fg):
        fg = (np.asarray(per_class_fg) != 0).astype(np.uint8)
        agg = np.any(fg, axis=0).astype(np.uint8)
        return cls(fg, 1 - fg, agg, 1 - agg)

    @property
    def num_classes(self):
        return self.per_class_fg.shape[0]

    @property
    def hw(self):
        return self.agg_fg.shape

    def to_tensor(self):
        """(2C + 2) x H x W planes: fg_1..fg_C, bg_1..bg_C, agg_fg, agg_bg."""
        return np.concatenate(
            [self.per_class_fg, self.per_class_bg, self.agg_fg[None], self.agg_bg[None]]
        ).astype(np.uint8)

    @classmethod
    def from_tensor(cls, t):
        t = np.asarray(t)
        if t.ndim != 3 or t.shape[0] < 4 or t.shape[0] % 2:
            raise RankMismatch(f"mask tensor must be (2C+2) x H x W, got {t.shape}")
        c = (t.shape[0] - 2) // 2
        return cls(t[:c], t[c:2 * c], t[2 * c], t[2 * c + 1])


def _box_window(box, grid):
    corners = box_bev_footprint(box)
    xs, ys = grid.cell_centers()
    dx, dy = grid.cell[0], grid.cell[1]
    w0 = math.floor((corners[:, 0].min() - grid.x_range[0]) / dx) - 1
    w1 = math.ceil((corners[:, 0].max() - grid.x_range[0]) / dx) + 1
    h0 = math.floor((corners[:, 1].min() - grid.y_range[0]) / dy) - 1
    h1 = math.ceil((corners[:, 1].max() - grid.y_range[0]) / dy) + 1
    w0, w1 = max(w0, 0), min(w1, len(xs))
    h0, h1 = max(h0, 0), min(h1, len(ys))
    return slice(h0, h1), slice(w0, w1), xs[w0:w1], ys[h0:h1]


def rasterize_class_masks(boxes, grid, num_classes):
    """Per-class BEV masks: a cell is foreground when its center is in a footprint."""
    H, W, _ = grid.shape
    fg = np.zeros((num_classes, H, W), dtype=np.uint8)
    for box in boxes:
        c = int(box.class_code)
        if c > num_classes:
            raise ClassOutOfRange(f"class code {c} exceeds num_classes={num_classes}")
        hs, ws, xs, ys = _box_window(box, grid)
        if xs.size == 0 or ys.size == 0:
            continue
        gx, gy = np.meshgrid(xs, ys)
        inside = points_in_footprint(np.stack([gx, gy], axis=-1), box)
        fg[c - 1, hs, ws] |= inside.astype(np.uint8)
    return MaskStack.from_foreground(fg)


def pgm_bytes(plane, binary=False):
    """Binary PGM (P5, maxval 255). Binary planes map 1 -> 255; others are min-max scaled."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise RankMismatch(f"PGM plane must be 2-D, got shape {plane.shape}")
    if binary:
        img = np.where(plane != 0, 255, 0)
    else:
        lo, hi = float(plane.min()), float(plane.max())
        if hi > lo:
            img = np.rint((plane - lo) / (hi - lo) * 255.0)
        else:
            img = np.zeros_like(plane)
    h, w = plane.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.astype(np.uint8).tobytes()


def read_pgm(data):
    """Parse a P5 image produced by ``pgm_bytes``."""
    magic, dims, maxval, rest = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise SPNetError("not a P5/255 PGM")
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(rest, dtype=np.uint8, count=w * h).reshape(h, w)
