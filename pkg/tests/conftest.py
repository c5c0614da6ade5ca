import math

import numpy as np
import pytest

from spnet.geometry import OrientedBox3D


def random_boxes(rng, n, num_classes=3, spread=4.0, center=(0.0, 0.0, 0.0), equal_area_pool=True):
    """Overlapping boxes around ``center``; sizes drawn from a small pool so ties happen."""
    pool = [(2.0, 1.0), (1.0, 2.0), (1.5, 1.5), (3.0, 1.2), (0.8, 0.6)]
    boxes = []
    for _ in range(n):
        if equal_area_pool:
            l, w = pool[rng.integers(len(pool))]
        else:
            l, w = rng.uniform(0.5, 4.0, 2)
        boxes.append(OrientedBox3D(
            center=np.asarray(center) + rng.uniform(-spread, spread, 3) * (1, 1, 0.2),
            dims=(l, w, rng.uniform(1.0, 2.0)),
            yaw=rng.uniform(-math.pi, math.pi),
            class_code=int(rng.integers(1, num_classes + 1)),
        ))
    return boxes


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
