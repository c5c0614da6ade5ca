"""Oriented boxes, point clouds and camera/lidar frame conversion."""
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ShapeMismatch, SingularCalib, SPNetError

BASE_COLUMNS = ("x", "y", "z", "reflectance")


def normalize_angle(a):
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class OrientedBox3D:
    """7-DoF box in the lidar frame, ``center`` at the gravity center."""

    center: tuple
    dims: tuple  # (length, width, height)
    yaw: float
    class_code: int = 1

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "dims", tuple(float(v) for v in self.dims))
        object.__setattr__(self, "yaw", float(self.yaw))
        if len(self.center) != 3 or len(self.dims) != 3:
            raise SPNetError("center and dims must have three components")
        if not all(d > 0 for d in self.dims):
            raise SPNetError(f"box dims must be positive, got {self.dims}")
        if int(self.class_code) < 1:
            raise SPNetError("class_code 0 is reserved for background")

    @property
    def bev_area(self):
        return self.dims[0] * self.dims[1]


@dataclass(frozen=True)
class Calib:
    rect: np.ndarray  # 3x3 R0_rect
    velo_to_cam: np.ndarray  # 3x4 Tr_velo_to_cam

    def __post_init__(self):
        rect = np.asarray(self.rect, dtype=np.float64).reshape(3, 3)
        v2c = np.asarray(self.velo_to_cam, dtype=np.float64).reshape(3, 4)
        object.__setattr__(self, "rect", rect)
        object.__setattr__(self, "velo_to_cam", v2c)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.hstack([np.eye(3), np.zeros((3, 1))]))


@dataclass
class PointCloud:
    values: np.ndarray
    columns: tuple = field(default=BASE_COLUMNS)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim == 1 and values.size == 0:
            values = values.reshape(0, len(self.columns))
        if values.ndim != 2:
            raise ShapeMismatch(f"point values must be N x C, got shape {values.shape}")
        self.columns = tuple(self.columns)
        if tuple(self.columns[:4]) != BASE_COLUMNS:
            raise SPNetError(f"first four columns must be {BASE_COLUMNS}")
        if values.shape[1] != len(self.columns):
            raise ShapeMismatch(f"{values.shape[1]} value columns but {len(self.columns)} names")
        self.values = values

    def __len__(self):
        return self.values.shape[0]

    @property
    def xyz(self):
        return self.values[:, :3].astype(np.float64)


def _local_coords(xyz, box):
    """Box-frame coordinates: translate by -center then rotate by -yaw about z."""
    xyz = np.asarray(xyz, dtype=np.float64)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx = xyz[..., 0] - box.center[0]
    dy = xyz[..., 1] - box.center[1]
    dz = xyz[..., 2] - box.center[2]
    return c * dx + s * dy, -s * dx + c * dy, dz


def points_in_box(xyz, box):
    """Vectorized inclusive containment for an (N, 3) array of points."""
    lx, ly, lz = _local_coords(xyz, box)
    l, w, h = box.dims
    return (np.abs(lx) <= l / 2) & (np.abs(ly) <= w / 2) & (np.abs(lz) <= h / 2)


def point_in_box(p, box):
    return bool(points_in_box(np.asarray(p, dtype=np.float64).reshape(1, 3), box)[0])


def points_in_footprint(xy, box):
    """Inclusive containment of (N, 2) points in the box's BEV rectangle."""
    xy = np.asarray(xy, dtype=np.float64)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx = xy[..., 0] - box.center[0]
    dy = xy[..., 1] - box.center[1]
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    return (np.abs(lx) <= box.dims[0] / 2) & (np.abs(ly) <= box.dims[1] / 2)


def box_bev_footprint(box):
    """Four BEV corners, counter-clockwise from the (+l/2, +w/2) corner."""
    hl, hw = box.dims[0] / 2, box.dims[1] / 2
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array(box.center[:2])


def _solve(mat, vec, name):
    if abs(np.linalg.det(mat)) < 1e-12:
        raise SingularCalib(f"{name} is not invertible")
    return np.linalg.solve(mat, vec)


def cam_to_lidar_points(xyz_cam, calib):
    """Map rectified-camera points to lidar by inverting rect then Tr_velo_to_cam."""
    xyz_cam = np.asarray(xyz_cam, dtype=np.float64).reshape(-1, 3)
    unrect = _solve(calib.rect, xyz_cam.T, "R0_rect")
    rot, trans = calib.velo_to_cam[:, :3], calib.velo_to_cam[:, 3:]
    return _solve(rot, unrect - trans, "Tr_velo_to_cam rotation").T


def box_cam_to_lidar(label, calib):
    """Convert a camera-frame label (KITTI convention) into a lidar-frame box.

    ``label`` needs ``dims_hwl``, ``location_cam``, ``rotation_y`` and a
    ``class_code`` (either attribute, or pass records through ``kitti`` first).
    """
    h, w, l = label.dims_hwl
    bottom = cam_to_lidar_points(label.location_cam, calib)[0]
    center = (bottom[0], bottom[1], bottom[2] + h / 2)
    yaw = normalize_angle(-label.rotation_y - math.pi / 2)
    return OrientedBox3D(center, (l, w, h), yaw, getattr(label, "class_code", 1))
