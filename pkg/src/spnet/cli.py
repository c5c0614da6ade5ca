"""``spnet`` command line: paint, masks, pillarize, distill, synth, gradcheck.

Exit codes: 0 success, 1 check failure, 2 input/validation error, 3 I/O error.
"""
import argparse
import os
import sys

import numpy as np

from . import kitti
from .bevgrid import KITTI_GRID_STRING, MaskStack, parse_grid, pgm_bytes, pillarize, rasterize_class_masks
from .exceptions import IoFailure, MalformedLine, SPNetError
from .geometry import box_cam_to_lidar
from .painting import ENCODINGS, paint
from .passing import (
    BACKGROUNDS,
    CLASS_DISTANCES,
    INSTANCE_DISTANCES,
    LOSS_IDS,
    PIXEL_DISTANCES,
    PassingWeights,
    class_similarity_maps,
    finite_diff_check,
    pixel_distance_map,
    total_distill_loss,
)
from .synth import SceneSpec, brute_force_paint, generate_scene
from .tensor import load_tensor, save_tensor
from .validation import check_feature_map

GRADCHECK_TOLERANCE = 1e-4

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _read(path, binary=False):
    try:
        with open(path, "rb" if binary else "r", **({} if binary else {"encoding": "utf-8"})) as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"{path}: cannot read ({exc.strerror or exc})") from None


def _write(path, data):
    try:
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        with open(path, "wb" if isinstance(data, bytes) else "w") as fh:
            fh.write(data)
    except OSError as exc:
        raise CliError(EXIT_IO, f"{path}: cannot write ({exc.strerror or exc})") from None


def _save(path, arr):
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        save_tensor(arr, path)
    except (IoFailure, OSError) as exc:
        raise CliError(EXIT_IO, f"{path}: cannot write ({exc})") from None


def _load(path):
    if not os.path.exists(path):
        raise CliError(EXIT_INPUT, f"{path}: no such file")
    try:
        return load_tensor(path)
    except SPNetError as exc:
        raise CliError(EXIT_INPUT, f"{path}: {exc}") from None


def _parse(path, fn, *args):
    text = _read(path)
    try:
        return fn(text, *args)
    except MalformedLine as exc:
        raise CliError(EXIT_INPUT, f"{path}:{exc.line_no}: malformed label ({exc})") from None
    except SPNetError as exc:
        raise CliError(EXIT_INPUT, f"{path}: {exc}") from None


def _grid(text):
    try:
        return parse_grid(text)
    except SPNetError as exc:
        raise CliError(EXIT_INPUT, f"invalid grid {text!r}: {exc}") from None


def _lidar_boxes(labels_path, calib_path):
    records, skipped = _parse(labels_path, kitti.parse_labels)
    calib = _parse(calib_path, kitti.parse_calib)
    try:
        boxes = [box_cam_to_lidar(r, calib) for r in records]
    except SPNetError as exc:
        raise CliError(EXIT_INPUT, f"{calib_path}: {exc}") from None
    return boxes, skipped


def _emit(**kv):
    for k, v in kv.items():
        print(f"{k}={v}")


# ------------------------------------------------------------------ commands

def cmd_paint(args):
    raw = _read(args.velodyne, binary=True)
    try:
        cloud = kitti.parse_velodyne(raw)
    except SPNetError as exc:
        raise CliError(EXIT_INPUT, f"{args.velodyne}: {exc}") from None
    boxes, skipped = _lidar_boxes(args.labels, args.calib)
    try:
        painted = paint(cloud, boxes, args.encoding, args.num_classes)
    except SPNetError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None
    _save(args.out, painted.values)
    labels = painted.labels()
    _emit(n_points=len(labels), fg_points=int(np.count_nonzero(labels)),
          paint_width=painted.paint_width, skipped_labels=skipped)
    for code in range(1, args.num_classes + 1):
        name = kitti.CLASS_NAMES.get(code, f"class{code}")
        _emit(**{f"count_{name}": int(np.count_nonzero(labels == code))})
    return EXIT_OK


def cmd_masks(args):
    grid = _grid(args.grid)
    boxes, _ = _lidar_boxes(args.labels, args.calib)
    try:
        masks = rasterize_class_masks(boxes, grid, args.num_classes)
    except SPNetError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None
    _save(args.out, masks.to_tensor())
    if args.pgm_dir:
        planes = masks.to_tensor()
        C = masks.num_classes
        names = [f"fg_{c}" for c in range(1, C + 1)] + [f"bg_{c}" for c in range(1, C + 1)]
        for name, plane in zip(names + ["agg_fg", "agg_bg"], planes):
            _write(os.path.join(args.pgm_dir, f"{name}.pgm"), pgm_bytes(plane, binary=True))
    H, W, D = grid.shape
    _emit(H=H, W=W, D=D, agg_fg_cells=int(masks.agg_fg.sum()))
    return EXIT_OK


def cmd_pillarize(args):
    grid = _grid(args.grid)
    if args.cloud:
        cloud = _load(args.cloud)
        if cloud.ndim != 2 or cloud.shape[1] < 4:
            raise CliError(EXIT_INPUT, f"{args.cloud}: expected N x 4+ cloud, got shape {cloud.shape}")
    else:
        try:
            cloud = kitti.parse_velodyne(_read(args.velodyne, binary=True))
        except SPNetError as exc:
            raise CliError(EXIT_INPUT, f"{args.velodyne}: {exc}") from None
    vol = pillarize(cloud, grid)
    _save(args.out, vol)
    _emit(shape="x".join(map(str, vol.shape)), occupied_cells=int(np.count_nonzero(vol[..., 0])))
    return EXIT_OK


def _feature_pair(t_path, s_path, name):
    t, s = _load(t_path), _load(s_path)
    try:
        t = check_feature_map(t, f"teacher {name}")
        s = check_feature_map(s, f"student {name}")
    except (SPNetError, ValueError) as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None
    return t, s


def cmd_distill(args):
    vt, vs = _feature_pair(args.teacher_v2d, args.student_v2d, "v2d")
    ft, fs = _feature_pair(args.teacher_bev or args.teacher_v2d,
                           args.student_bev or args.student_v2d, "bev")
    ot, os_ = _feature_pair(args.teacher_cls or args.teacher_v2d,
                            args.student_cls or args.student_v2d, "cls")
    try:
        masks = MaskStack.from_tensor(_load(args.masks))
    except SPNetError as exc:
        raise CliError(EXIT_INPUT, f"{args.masks}: {exc}") from None
    for name, t, s in (("v2d", vt, vs), ("bev", ft, fs), ("cls", ot, os_)):
        if t.shape != s.shape:
            raise CliError(EXIT_INPUT,
                           f"shape mismatch for {name}: teacher {t.shape} vs student {s.shape}")
        if t.shape[:2] != masks.hw:
            raise CliError(EXIT_INPUT,
                           f"shape mismatch for {name}: features {t.shape} vs masks {masks.hw}")
    try:
        weights = PassingWeights(args.lambda_c, args.lambda_f, args.lambda_p,
                                 args.lambda_fg, args.lambda_bg, args.epsilon)
        report = total_distill_loss(vt, vs, ft, fs, ot, os_, masks, weights,
                                    args.class_distance, args.pixel_distance,
                                    args.instance_distance, args.background)
    except SPNetError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None
    _write(args.report, report.to_csv())
    if args.heatmap_dir:
        dt = class_similarity_maps(vt, masks, weights.epsilon, args.background)
        ds = class_similarity_maps(vs, masks, weights.epsilon, args.background)
        for c, plane in enumerate(np.abs(dt - ds), start=1):
            _write(os.path.join(args.heatmap_dir, f"class_diff_{c}.pgm"), pgm_bytes(plane))
        _write(os.path.join(args.heatmap_dir, "pixel_loss.pgm"),
               pgm_bytes(pixel_distance_map(ft, fs, masks.agg_fg)))
    _emit(**{name: f"{v:.17g}" for name, v in report.rows()[:4]})
    return EXIT_OK


def cmd_synth(args):
    grid = _grid(args.grid)
    spec = SceneSpec(seed=args.seed, num_boxes=args.boxes, num_points=args.points,
                     grid=grid, noise=args.noise, num_classes=args.num_classes)
    scene = generate_scene(spec)
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"{args.out}: cannot create directory ({exc.strerror})") from None
    codes = brute_force_paint(scene.points[:, :3], scene.boxes)
    oracle = np.hstack([scene.points, codes.astype(np.float32)[:, None]])
    _write(os.path.join(args.out, "velodyne.bin"), kitti.velodyne_bytes(scene.points))
    _write(os.path.join(args.out, "label.txt"), kitti.format_labels(scene.labels))
    _write(os.path.join(args.out, "calib.txt"), kitti.format_calib(scene.calib))
    _save(os.path.join(args.out, "paint_oracle.sptn"), oracle)
    _emit(n_points=len(codes), n_boxes=len(scene.boxes), fg_points=int(np.count_nonzero(codes)))
    return EXIT_OK


def _size(text):
    try:
        dims = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size {text!r}, expected HxWxC") from None
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"bad size {text!r}, expected HxWxC")
    return dims


def cmd_gradcheck(args):
    try:
        res = finite_diff_check(args.loss, args.size, args.seed, args.step, args.classes)
    except SPNetError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None
    _emit(max_rel_err=f"{res.max_rel_err:.6e}")
    if res.max_rel_err > GRADCHECK_TOLERANCE:
        _emit(worst_index=",".join(map(str, res.worst_index)),
              analytic=f"{res.analytic:.17g}", numeric=f"{res.numeric:.17g}")
        return EXIT_CHECK
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser():
    parser = argparse.ArgumentParser(prog="spnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="file of key=value lines; flags take precedence")
        p.set_defaults(func=fn)
        return p

    p = add("paint", cmd_paint, "GT-paint a velodyne scan")
    p.add_argument("--velodyne", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--encoding", choices=ENCODINGS, default="categorical")
    p.add_argument("--num-classes", type=int, default=3)
    p.add_argument("--out", required=True)

    p = add("masks", cmd_masks, "rasterize per-class BEV masks")
    p.add_argument("--labels", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--grid", default=KITTI_GRID_STRING)
    p.add_argument("--num-classes", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--pgm-dir")

    p = add("pillarize", cmd_pillarize, "stand-in pillar features from a cloud")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--cloud", help="SPTN point cloud (raw or painted)")
    src.add_argument("--velodyne", help="KITTI .bin scan")
    p.add_argument("--grid", default=KITTI_GRID_STRING)
    p.add_argument("--out", required=True)

    p = add("distill", cmd_distill, "evaluate the passing losses")
    for role in ("teacher", "student"):
        p.add_argument(f"--{role}-v2d", required=True)
        p.add_argument(f"--{role}-bev", help="defaults to the v2d tensor")
        p.add_argument(f"--{role}-cls", help="defaults to the v2d tensor")
    p.add_argument("--masks", required=True)
    defaults = PassingWeights()
    for name in ("lambda_c", "lambda_f", "lambda_p", "lambda_fg", "lambda_bg", "epsilon"):
        p.add_argument("--" + name.replace("_", "-"), type=float, default=getattr(defaults, name))
    p.add_argument("--class-distance", choices=CLASS_DISTANCES, default="frobenius")
    p.add_argument("--pixel-distance", choices=PIXEL_DISTANCES, default="l2")
    p.add_argument("--instance-distance", choices=INSTANCE_DISTANCES, default="kld")
    p.add_argument("--background", choices=BACKGROUNDS, default="class")
    p.add_argument("--report", required=True)
    p.add_argument("--heatmap-dir")

    p = add("synth", cmd_synth, "write a seeded synthetic scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--boxes", type=int, default=5, help="boxes per class")
    p.add_argument("--points", type=int, default=20000)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--num-classes", type=int, default=3)
    p.add_argument("--grid", default=KITTI_GRID_STRING)
    p.add_argument("--out", required=True)

    p = add("gradcheck", cmd_gradcheck, "finite-difference gradient check")
    p.add_argument("loss", choices=LOSS_IDS)
    p.add_argument("--size", type=_size, default=(8, 8, 4))
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--step", type=float, default=1e-5)

    return parser, sub


def read_config(path):
    out = {}
    for n, line in enumerate(_read(path).splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(EXIT_INPUT, f"{path}:{n}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def main(argv=None):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            cfg = read_config(args.config)
            subparser = sub.choices[args.command]
            known = {a.dest for a in subparser._actions}
            unknown = sorted(set(cfg) - known)
            if unknown:
                raise CliError(EXIT_INPUT, f"{args.config}: unknown keys {', '.join(unknown)}")
            # string defaults go through each option's type converter
            subparser.set_defaults(**cfg)
            args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"spnet {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
