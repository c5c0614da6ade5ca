"""Input validation helpers shared by the estimators and the CLI."""
import numpy as np
from sklearn.utils import check_array

from .exceptions import RankMismatch, ShapeMismatch


def check_points(X, min_columns=4):
    """Finite float32 N x C point array with at least ``min_columns`` channels."""
    X = check_array(X, dtype=np.float32, ensure_min_samples=0, ensure_all_finite=True)
    if X.shape[1] < min_columns:
        raise ShapeMismatch(f"need at least {min_columns} point channels, got {X.shape[1]}")
    return X


def check_feature_map(X, name="features"):
    """Return an H x W x C float64 map; rank-4 volumes are compressed to BEV."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 4:
        H, W, D, M = X.shape
        X = X.reshape(H, W, D * M)
    if X.ndim != 3:
        raise RankMismatch(f"{name} must be H x W x C (or H x W x D x M), got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_same_shape(a, b, names=("teacher", "student")):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{names[0]} shape {a.shape} != {names[1]} shape {b.shape}")
