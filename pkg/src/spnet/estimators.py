"""scikit-learn compatible wrappers around the painting, gridding and loss kernels."""
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .bevgrid import KITTI_GRID_STRING, GridSpec, compress_bev, parse_grid, pillarize
from .painting import paint
from .passing import PassingWeights, total_distill_loss
from .validation import check_feature_map, check_points, check_same_shape


class GTPainter(TransformerMixin, BaseEstimator):
    """Append a ground-truth class indicator to every point.

    ``transform`` takes the per-frame lidar-frame boxes as a keyword, since
    boxes differ from scan to scan. One-hot output with three classes is
    N x 8: (x, y, z, r) plus four paint slots.
    """

    def __init__(self, encoding="categorical", num_classes=3):
        self.encoding = encoding
        self.num_classes = num_classes

    def fit(self, X, y=None):
        X = check_points(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X, boxes=()):
        check_is_fitted(self, "n_features_in_")
        X = check_points(X)
        return paint(X, list(boxes), self.encoding, self.num_classes).values

    def fit_transform(self, X, y=None, boxes=()):
        return self.fit(X, y).transform(X, boxes=boxes)


class Pillarizer(TransformerMixin, BaseEstimator):
    """Points (optionally painted) -> stand-in pillar features on a BEV grid."""

    def __init__(self, grid=KITTI_GRID_STRING, compress=False):
        self.grid = grid
        self.compress = compress

    def _grid(self):
        return self.grid if isinstance(self.grid, GridSpec) else parse_grid(self.grid)

    def fit(self, X, y=None):
        X = check_points(X)
        self.grid_ = self._grid()
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        vol = pillarize(check_points(X), self.grid_)
        return compress_bev(vol) if self.compress else vol


class SemanticPassingLoss(BaseEstimator):
    """Combined class/pixel/instance passing loss with tunable weights and variants."""

    def __init__(self, lambda_c=0.1, lambda_f=10.0, lambda_p=10.0, lambda_fg=2.0,
                 lambda_bg=0.1, epsilon=1e-6, class_distance="frobenius",
                 pixel_distance="l2", instance_distance="kld", background="class"):
        self.lambda_c = lambda_c
        self.lambda_f = lambda_f
        self.lambda_p = lambda_p
        self.lambda_fg = lambda_fg
        self.lambda_bg = lambda_bg
        self.epsilon = epsilon
        self.class_distance = class_distance
        self.pixel_distance = pixel_distance
        self.instance_distance = instance_distance
        self.background = background

    @property
    def weights(self):
        return PassingWeights(self.lambda_c, self.lambda_f, self.lambda_p,
                              self.lambda_fg, self.lambda_bg, self.epsilon)

    def compute(self, teacher, student, masks):
        """``teacher``/``student`` are (v2d, bev, cls) triples; returns a LossReport."""
        maps = []
        for name, t, s in zip(("v2d", "bev", "cls"), teacher, student):
            t = check_feature_map(t, f"teacher {name}")
            s = check_feature_map(s, f"student {name}")
            check_same_shape(t, s, (f"teacher {name}", f"student {name}"))
            maps += [t, s]
        return total_distill_loss(*maps, masks, self.weights, self.class_distance,
                                  self.pixel_distance, self.instance_distance, self.background)

    __call__ = compute
