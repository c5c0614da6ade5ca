"""Semantic-passing distillation losses with analytic student gradients.

Every loss returns ``(value, grad)`` where ``grad`` is d(value)/d(student input).
Reductions go through :func:`spnet.tensor.seq_sum` (class-major, then row-major
pixels) so results are reproducible bit-for-bit.
"""
import math
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Optional

import numpy as np

from .exceptions import ClassCountMismatch, MaskNotComplementary, ShapeMismatch, SPNetError
from .tensor import as_f64, pixel_norm, seq_sum

CLASS_DISTANCES = ("frobenius", "abs")
PIXEL_DISTANCES = ("l2", "l1", "kld")
INSTANCE_DISTANCES = ("kld", "l1", "l2")
BACKGROUNDS = ("class", "all")


@dataclass(frozen=True)
class PassingWeights:
    lambda_c: float = 0.1
    lambda_f: float = 10.0
    lambda_p: float = 10.0
    lambda_fg: float = 2.0
    lambda_bg: float = 0.1
    epsilon: float = 1e-6

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, float(getattr(self, f.name)))
        if not self.epsilon > 0:
            raise SPNetError("epsilon must be positive")
        for name in ("lambda_c", "lambda_f", "lambda_p", "lambda_fg", "lambda_bg"):
            if getattr(self, name) < 0:
                raise SPNetError(f"{name} must be nonnegative")


@dataclass
class LossReport:
    l_c: float
    l_f: float
    l_p: float
    l_total: float
    weights: PassingWeights
    per_class_centers: Optional[np.ndarray] = field(default=None, repr=False)

    def rows(self):
        w = self.weights
        return [
            ("l_c", self.l_c),
            ("l_f", self.l_f),
            ("l_p", self.l_p),
            ("l_total", self.l_total),
            ("lambda_c", w.lambda_c),
            ("lambda_f", w.lambda_f),
            ("lambda_p", w.lambda_p),
            ("lambda_fg", w.lambda_fg),
            ("lambda_bg", w.lambda_bg),
            ("epsilon", w.epsilon),
        ]

    def to_csv(self):
        lines = ["metric,value"]
        lines += [f"{name},{float(v):.17g}" for name, v in self.rows()]
        return "\n".join(lines) + "\n"


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{what}: shapes {a.shape} and {b.shape} differ")


def _hwc(arr, what):
    arr = as_f64(arr)
    if arr.ndim != 3:
        raise ShapeMismatch(f"{what} must be H x W x C, got shape {arr.shape}")
    return arr


def _mask(mask, hw, what="mask"):
    mask = as_f64(mask)
    if mask.shape != tuple(hw):
        raise ShapeMismatch(f"{what} shape {mask.shape} does not match H x W {tuple(hw)}")
    return mask


def _check_complement(fg, bg):
    if not np.array_equal(fg + bg, np.ones_like(fg)):
        raise MaskNotComplementary("foreground and background masks must sum to 1")


# ---------------------------------------------------------------- class-wise

def class_center(v2d, fg_mask):
    """Masked channelwise mean of the BEV features; zero vector for an empty mask."""
    v = _hwc(v2d, "v2d")
    m = _mask(fg_mask, v.shape[:2], "fg_mask")
    n = seq_sum(m)
    K = v.shape[2]
    if n == 0:
        return np.zeros(K)
    return seq_sum((m[..., None] * v).reshape(-1, K), axis=0) / n


def global_feature(v2d, fg_mask, bg_mask, center, check=True):
    """Background pixels keep their features; foreground pixels take the class center."""
    v = _hwc(v2d, "v2d")
    fg = _mask(fg_mask, v.shape[:2], "fg_mask")
    bg = _mask(bg_mask, v.shape[:2], "bg_mask")
    if check:
        _check_complement(fg, bg)
    center = as_f64(center).reshape(-1)
    if center.size != v.shape[2]:
        raise ShapeMismatch(f"center length {center.size} != channels {v.shape[2]}")
    return bg[..., None] * v + fg[..., None] * center


def _cosine(v, g, epsilon):
    dot = seq_sum(v * g, axis=-1)
    nv, ng = pixel_norm(v), pixel_norm(g)
    prod = nv * ng
    den = np.maximum(prod, epsilon)
    sim = np.clip(dot / den, -1.0, 1.0)
    return sim, (nv, ng, prod, den)


def similarity_map(v2d, global_feat, epsilon=1e-6):
    """Per-pixel cosine similarity with an epsilon-guarded denominator."""
    v = _hwc(v2d, "v2d")
    g = _hwc(global_feat, "global_feat")
    _same_shape(v, g, "similarity_map")
    sim, _ = _cosine(v, g, epsilon)
    assert np.all((sim >= -1.0) & (sim <= 1.0))
    return sim


def _bg_for(masks, c, background):
    if background == "class":
        return masks.per_class_bg[c]
    if background == "all":
        return masks.agg_bg
    raise SPNetError(f"unknown background mode {background!r}; expected one of {BACKGROUNDS}")


def _class_forward(v, fg, bg, epsilon):
    n = seq_sum(fg)
    center = class_center(v, fg)
    g = bg[..., None] * v + fg[..., None] * center
    sim, cache = _cosine(v, g, epsilon)
    return sim, (g, n, center) + cache


def _class_backward(v, fg, bg, d_sim, cache, epsilon):
    """Pull d(loss)/d(sim) back through cosine -> global feature -> center pooling."""
    g, n, _, nv, ng, prod, den = cache
    sim = (seq_sum(v * g, axis=-1)) / den
    live = (prod > epsilon)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        dv_live = g / den[..., None] - sim[..., None] * v / (nv * nv)[..., None]
        dg_live = v / den[..., None] - sim[..., None] * g / (ng * ng)[..., None]
    dsim_dv = np.where(live, dv_live, g / epsilon)
    dsim_dg = np.where(live, dg_live, v / epsilon)
    gd = d_sim[..., None] * dsim_dg  # d loss / d global feature
    grad = d_sim[..., None] * dsim_dv + bg[..., None] * gd
    if n > 0:
        K = v.shape[2]
        d_center = seq_sum((fg[..., None] * gd).reshape(-1, K), axis=0)
        grad = grad + fg[..., None] * (d_center / n)
    return grad


def class_similarity_maps(v2d, masks, epsilon=1e-6, background="class"):
    """C x H x W similarity maps; absent classes give all-zero maps."""
    v = _hwc(v2d, "v2d")
    _check_masks(masks, v.shape[:2])
    out = np.zeros((masks.num_classes,) + v.shape[:2])
    for c in range(masks.num_classes):
        fg = as_f64(masks.per_class_fg[c])
        if seq_sum(fg) == 0:
            continue
        out[c], _ = _class_forward(v, fg, as_f64(_bg_for(masks, c, background)), epsilon)
    return out


def _check_masks(masks, hw, num_classes=None):
    if tuple(masks.hw) != tuple(hw):
        raise ShapeMismatch(f"mask H x W {tuple(masks.hw)} does not match features {tuple(hw)}")
    if num_classes is not None and masks.num_classes != num_classes:
        raise ClassCountMismatch(f"masks hold {masks.num_classes} classes, expected {num_classes}")


def class_wise_loss(vt2d, vs2d, masks, epsilon=1e-6, distance="frobenius",
                    background="class", num_classes=None):
    """Class-wise passing loss and its gradient w.r.t. the student map.

    Per present class the teacher/student similarity maps are compared by the
    Frobenius norm of their difference (``distance="abs"`` sums absolute
    differences instead); the class terms are summed and divided by H*W.
    """
    if distance not in CLASS_DISTANCES:
        raise SPNetError(f"unknown class distance {distance!r}; expected one of {CLASS_DISTANCES}")
    t = _hwc(vt2d, "teacher v2d")
    s = _hwc(vs2d, "student v2d")
    _same_shape(t, s, "class_wise_loss")
    _check_masks(masks, s.shape[:2], num_classes)
    H, W, _ = s.shape
    hw = float(H * W)
    terms = []
    grad = np.zeros_like(s)
    for c in range(masks.num_classes):
        fg = as_f64(masks.per_class_fg[c])
        if seq_sum(fg) == 0:
            continue
        bg = as_f64(_bg_for(masks, c, background))
        sim_t, _ = _class_forward(t, fg, bg, epsilon)
        sim_s, cache = _class_forward(s, fg, bg, epsilon)
        diff = sim_t - sim_s
        if distance == "frobenius":
            term = math.sqrt(seq_sum(diff * diff))
            d_sim = -diff / term if term > 0 else np.zeros_like(diff)
        else:
            term = seq_sum(np.abs(diff))
            d_sim = -np.sign(diff)
        terms.append(term)
        grad += _class_backward(s, fg, bg, d_sim / hw, cache, epsilon)
    loss = seq_sum(np.array(terms)) / hw if terms else 0.0
    return loss, grad


# ---------------------------------------------------------------- pixel-wise

def masked_kld(ft, fs, mask, epsilon=1e-6):
    """Masked KL term: sum(mask * ft * (log ft - log fs)) / max(sum(mask), eps).

    ``mask`` covers the leading axes of ``ft`` and is broadcast over the rest.
    Scores are clamped to [eps, 1] first.
    """
    return _masked_kld(ft, fs, mask, epsilon)[0]


def _broadcast_mask(mask, shape):
    mask = as_f64(mask)
    if mask.shape != tuple(shape[: mask.ndim]):
        raise ShapeMismatch(f"mask shape {mask.shape} does not lead score shape {tuple(shape)}")
    return mask.reshape(mask.shape + (1,) * (len(shape) - mask.ndim))


def _masked_kld(ft, fs, mask, epsilon):
    t, s = as_f64(ft), as_f64(fs)
    _same_shape(t, s, "masked_kld")
    m = _broadcast_mask(mask, s.shape)
    pt = np.clip(t, epsilon, 1.0)
    ps = np.clip(s, epsilon, 1.0)
    den = max(seq_sum(mask), epsilon)
    value = seq_sum(m * pt * (np.log(pt) - np.log(ps))) / den
    inside = (s >= epsilon) & (s <= 1.0)
    grad = np.where(inside, -m * pt / ps, 0.0) / den
    return value, grad


def _masked_distance(ft, fs, mask, epsilon, distance):
    """Masked, mask-normalized per-pixel distance and its gradient w.r.t. ``fs``."""
    if distance == "kld":
        return _masked_kld(ft, fs, mask, epsilon)
    t, s = as_f64(ft), as_f64(fs)
    m = as_f64(mask)
    den = max(seq_sum(m), epsilon)
    diff = t - s
    if distance == "l2":
        norm = pixel_norm(diff)
        value = seq_sum(m * norm) / den
        safe = np.where(norm > 0, norm, 1.0)
        grad = np.where((norm > 0)[..., None], -diff / safe[..., None], 0.0)
    elif distance == "l1":
        value = seq_sum(m * seq_sum(np.abs(diff), axis=-1)) / den
        grad = -np.sign(diff)
    else:
        raise SPNetError(f"unknown distance {distance!r}")
    return value, m[..., None] * grad / den


def pixel_wise_loss(ft, fs, fg_mask, epsilon=1e-6, distance="l2"):
    """Foreground-masked per-pixel feature distance, normalized by the mask area."""
    if distance not in PIXEL_DISTANCES:
        raise SPNetError(f"unknown pixel distance {distance!r}; expected one of {PIXEL_DISTANCES}")
    t = _hwc(ft, "teacher bev")
    s = _hwc(fs, "student bev")
    _same_shape(t, s, "pixel_wise_loss")
    fg = _mask(fg_mask, s.shape[:2], "fg_mask")
    return _masked_distance(t, s, fg, epsilon, distance)


def pixel_distance_map(ft, fs, fg_mask):
    """Per-pixel masked L2 distance (the summand of the pixel-wise loss)."""
    t, s = _hwc(ft, "teacher bev"), _hwc(fs, "student bev")
    _same_shape(t, s, "pixel_distance_map")
    return _mask(fg_mask, s.shape[:2], "fg_mask") * pixel_norm(t - s)


# ------------------------------------------------------------- instance-wise

def instance_wise_loss(ot, os, fg_mask, bg_mask, weights=None, distance="kld", check=True):
    """Foreground/background re-weighted masked KLD between score maps."""
    if distance not in INSTANCE_DISTANCES:
        raise SPNetError(
            f"unknown instance distance {distance!r}; expected one of {INSTANCE_DISTANCES}")
    w = weights or PassingWeights()
    t = _hwc(ot, "teacher scores")
    s = _hwc(os, "student scores")
    _same_shape(t, s, "instance_wise_loss")
    fg = _mask(fg_mask, s.shape[:2], "fg_mask")
    bg = _mask(bg_mask, s.shape[:2], "bg_mask")
    if check:
        _check_complement(fg, bg)
    v_fg, g_fg = _masked_distance(t, s, fg, w.epsilon, distance)
    v_bg, g_bg = _masked_distance(t, s, bg, w.epsilon, distance)
    value = w.lambda_fg * v_fg + w.lambda_bg * v_bg
    grad = w.lambda_fg * g_fg + w.lambda_bg * g_bg
    return value, grad


# ------------------------------------------------------------------ combined

def total_distill_loss(vt2d, vs2d, ft, fs, ot, os, masks, weights=None,
                       class_distance="frobenius", pixel_distance="l2",
                       instance_distance="kld", background="class"):
    """Weighted sum of the three passing losses (detection loss excluded)."""
    w = weights or PassingWeights()
    l_c, _ = class_wise_loss(vt2d, vs2d, masks, w.epsilon, class_distance, background)
    fg = masks.agg_fg
    l_f, _ = pixel_wise_loss(ft, fs, fg, w.epsilon, pixel_distance)
    l_p, _ = instance_wise_loss(ot, os, fg, masks.agg_bg, w, instance_distance)
    l_total = w.lambda_c * l_c + w.lambda_f * l_f + w.lambda_p * l_p
    s = _hwc(vs2d, "student v2d")
    centers = np.stack([class_center(s, masks.per_class_fg[c]) for c in range(masks.num_classes)])
    return LossReport(float(l_c), float(l_f), float(l_p), float(l_total), w, centers)


# --------------------------------------------------------- gradient checking

class GradCheckResult(NamedTuple):
    max_rel_err: float
    worst_index: tuple
    analytic: float
    numeric: float


LOSS_IDS = ("class", "pixel", "instance")


def _random_masks(rng, H, W, num_classes):
    from .bevgrid import MaskStack

    labels = rng.integers(0, num_classes + 1, size=(H, W))
    cells = rng.permutation(H * W)[:num_classes]
    for c, cell in enumerate(cells, start=1):
        labels.flat[cell] = c
    fg = np.stack([(labels == c) for c in range(1, num_classes + 1)])
    return MaskStack.from_foreground(fg)


def make_gradcheck_problem(loss_id, shape, seed, num_classes=2, epsilon=1e-6):
    """Random smooth inputs for ``loss_id``; returns ``(f, grad_f, x0)``.

    Inputs are rejection-sampled away from the loss kinks (zero distance,
    the epsilon switch of the cosine denominator, the score clamp).
    """
    H, W, K = shape
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        if loss_id == "class":
            masks = _random_masks(rng, H, W, num_classes)
            t = rng.uniform(-1, 1, size=shape)
            s = rng.uniform(-1, 1, size=shape)
            ok = True
            for c in range(num_classes):
                fg = as_f64(masks.per_class_fg[c])
                _, cache = _class_forward(s, fg, 1 - fg, epsilon)
                ok &= bool(np.all(cache[-2] > 1e3 * epsilon))
            if not ok:
                continue

            def f(x, t=t, masks=masks):
                return class_wise_loss(t, x, masks, epsilon)

            return f, s
        if loss_id == "pixel":
            fg = (rng.random((H, W)) < 0.5).astype(np.float64)
            fg.flat[rng.integers(H * W)] = 1.0
            t = rng.normal(size=shape)
            s = rng.normal(size=shape)
            if np.any(fg * pixel_norm(t - s) < 1e-3 * fg):
                continue

            def f(x, t=t, fg=fg):
                return pixel_wise_loss(t, x, fg, epsilon)

            return f, s
        if loss_id == "instance":
            fg = (rng.random((H, W)) < 0.5).astype(np.float64)
            t = rng.uniform(0.05, 0.95, size=shape)
            s = rng.uniform(0.05, 0.95, size=shape)

            def f(x, t=t, fg=fg):
                return instance_wise_loss(t, x, fg, 1 - fg, PassingWeights(epsilon=epsilon))

            return f, s
        raise SPNetError(f"unknown loss id {loss_id!r}; expected one of {LOSS_IDS}")
    raise SPNetError("could not sample inputs away from non-differentiable points")


def finite_diff_check(loss_id, shape, seed, step=1e-5, num_classes=2):
    """Worst relative error between analytic and central-difference gradients."""
    if not step > 0:
        raise SPNetError("step must be positive")
    f, x0 = make_gradcheck_problem(loss_id, tuple(shape), seed, num_classes)
    return compare_gradients(f, x0, step)


def compare_gradients(f, x0, step=1e-5):
    """``f(x) -> (value, grad)``; checks ``grad`` against central differences."""
    x = np.array(x0, dtype=np.float64)
    _, analytic = f(x)
    worst = GradCheckResult(0.0, (), 0.0, 0.0)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        fp = f(x)[0]
        x[idx] = orig - step
        fm = f(x)[0]
        x[idx] = orig
        fd = (fp - fm) / (2 * step)
        a = analytic[idx]
        rel = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
        if rel > worst.max_rel_err or not worst.worst_index:
            worst = GradCheckResult(float(rel), idx, float(a), float(fd))
    return worst
