"""Parsers (and fixture writers) for KITTI velodyne, label and calib files."""
from dataclasses import dataclass

import numpy as np

from .exceptions import BadFloatCount, MalformedLine, MisalignedBuffer, MissingKey
from .geometry import Calib, PointCloud

CLASS_MAP = {"Car": 1, "Pedestrian": 2, "Cyclist": 3}
CLASS_NAMES = {code: name for name, code in CLASS_MAP.items()}

_POINT_DTYPE = np.dtype("<f4")


@dataclass(frozen=True)
class LabelRecord:
    class_name: str
    truncation: float
    occlusion: int
    alpha: float
    bbox2d: tuple
    dims_hwl: tuple
    location_cam: tuple
    rotation_y: float
    class_code: int = 0


def parse_velodyne(buf):
    """Decode an N x 4 little-endian float32 scan."""
    buf = bytes(buf)
    if len(buf) % 16:
        raise MisalignedBuffer(f"velodyne buffer length {len(buf)} is not a multiple of 16")
    values = np.frombuffer(buf, dtype=_POINT_DTYPE).reshape(-1, 4).astype(np.float32)
    return PointCloud(values)


def velodyne_bytes(values):
    return np.ascontiguousarray(np.asarray(values)[:, :4], dtype=_POINT_DTYPE).tobytes()


def parse_labels(text, class_map=None):
    """Parse label lines, keeping only classes present in ``class_map``.

    Returns ``(records, skipped)``.
    """
    class_map = CLASS_MAP if class_map is None else class_map
    records, skipped = [], 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if fields[0] not in class_map:
            skipped += 1
            continue
        if len(fields) not in (15, 16):
            raise MalformedLine(line_no, f"expected 15 fields, got {len(fields)}")
        try:
            nums = [float(v) for v in fields[1:15]]
            occlusion = int(float(fields[2]))
        except ValueError as exc:
            raise MalformedLine(line_no, str(exc)) from None
        dims = tuple(nums[7:10])
        if not all(d > 0 for d in dims) or not all(np.isfinite(nums)):
            raise MalformedLine(line_no, f"invalid dimensions {dims}")
        records.append(
            LabelRecord(
                class_name=fields[0],
                truncation=nums[0],
                occlusion=occlusion,
                alpha=nums[2],
                bbox2d=tuple(nums[3:7]),
                dims_hwl=dims,
                location_cam=tuple(nums[10:13]),
                rotation_y=nums[13],
                class_code=int(class_map[fields[0]]),
            )
        )
    return records, skipped


def format_label(rec):
    vals = [rec.truncation, rec.occlusion, rec.alpha, *rec.bbox2d,
            *rec.dims_hwl, *rec.location_cam, rec.rotation_y]
    parts = [rec.class_name, f"{vals[0]:.2f}", str(int(vals[1]))]
    parts += [f"{v:.2f}" for v in vals[2:]]
    return " ".join(parts)


def format_labels(records):
    return "".join(format_label(r) + "\n" for r in records)


_CALIB_KEYS = {"R0_rect": 9, "Tr_velo_to_cam": 12}


def parse_calib(text):
    found = {}
    for line in text.splitlines():
        key, sep, rest = line.partition(":")
        key = key.strip()
        if not sep or key not in _CALIB_KEYS:
            continue
        try:
            found[key] = [float(v) for v in rest.split()]
        except ValueError:
            raise BadFloatCount(f"{key}: unparseable value") from None
    for key, n in _CALIB_KEYS.items():
        if key not in found:
            raise MissingKey(key)
        if len(found[key]) != n:
            raise BadFloatCount(f"{key}: expected {n} floats, got {len(found[key])}")
    return Calib(
        np.array(found["R0_rect"]).reshape(3, 3),
        np.array(found["Tr_velo_to_cam"]).reshape(3, 4),
    )


def format_calib(calib):
    def row(vals):
        return " ".join(f"{v:.12e}" for v in np.asarray(vals).reshape(-1))

    return f"R0_rect: {row(calib.rect)}\nTr_velo_to_cam: {row(calib.velo_to_cam)}\n"
