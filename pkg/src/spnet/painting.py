"""GT-Painting: tag every point with the class of the ground-truth box holding it.

Overlaps are resolved in favour of the box with the smallest BEV footprint,
then the lowest list index.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import ClassOutOfRange, SPNetError
from .geometry import BASE_COLUMNS, PointCloud, points_in_box

CATEGORICAL = "categorical"
ONEHOT = "onehot"
ENCODINGS = (CATEGORICAL, ONEHOT)


@dataclass
class PaintedCloud:
    base: PointCloud
    encoding: str
    paint: np.ndarray  # N x paint_width, float32
    num_classes: int

    @property
    def paint_width(self):
        return self.paint.shape[1]

    @property
    def columns(self):
        if self.encoding == CATEGORICAL:
            return BASE_COLUMNS + ("paint",)
        return BASE_COLUMNS + tuple(f"paint_{i}" for i in range(self.paint_width))

    @property
    def values(self):
        """N x (4 + paint_width) float32 array in (x, y, z, r, paint...) order."""
        return np.hstack([self.base.values[:, :4], self.paint]).astype(np.float32)

    def labels(self):
        """Per-point categorical class code regardless of encoding."""
        if self.encoding == CATEGORICAL:
            return self.paint[:, 0].astype(np.int64)
        return np.argmax(self.paint, axis=1).astype(np.int64)

    def foreground(self):
        return self.labels() > 0


def _as_cloud(cloud):
    if isinstance(cloud, PointCloud):
        return cloud
    values = np.asarray(cloud, dtype=np.float32)
    if values.ndim != 2 or values.shape[1] < 4:
        raise SPNetError(f"expected an N x 4 point array, got shape {values.shape}")
    return PointCloud(values[:, :4])


def assign_boxes(xyz, boxes):
    """Index of the winning box for every point, -1 for background."""
    xyz = np.asarray(xyz, dtype=np.float64)
    winner = np.full(xyz.shape[0], -1, dtype=np.int64)
    order = sorted(range(len(boxes)), key=lambda i: (boxes[i].bev_area, i))
    for i in order:
        free = np.flatnonzero(winner < 0)
        if free.size == 0:
            break
        inside = points_in_box(xyz[free], boxes[i])
        winner[free[inside]] = i
    return winner


def class_indicator(xyz, boxes):
    winner = assign_boxes(xyz, boxes)
    codes = np.array([0] + [int(b.class_code) for b in boxes], dtype=np.int64)
    return codes[winner + 1]


def paint_categorical(cloud, boxes):
    cloud = _as_cloud(cloud)
    codes = class_indicator(cloud.xyz, boxes)
    num_classes = max([int(b.class_code) for b in boxes], default=0)
    paint = codes.astype(np.float32).reshape(-1, 1)
    return PaintedCloud(cloud, CATEGORICAL, paint, num_classes)


def paint_onehot(cloud, boxes, num_classes):
    if num_classes < 1:
        raise SPNetError("num_classes must be positive")
    for b in boxes:
        if b.class_code > num_classes:
            raise ClassOutOfRange(f"class code {b.class_code} exceeds num_classes={num_classes}")
    cloud = _as_cloud(cloud)
    codes = class_indicator(cloud.xyz, boxes)
    paint = np.zeros((codes.size, num_classes + 1), dtype=np.float32)
    paint[np.arange(codes.size), codes] = 1.0
    return PaintedCloud(cloud, ONEHOT, paint, num_classes)


def paint(cloud, boxes, encoding=CATEGORICAL, num_classes=3):
    if encoding == CATEGORICAL:
        return paint_categorical(cloud, boxes)
    if encoding == ONEHOT:
        return paint_onehot(cloud, boxes, num_classes)
    raise SPNetError(f"unknown encoding {encoding!r}; expected one of {ENCODINGS}")
