"""GT-Painting and semantic-passing distillation losses for lidar 3D detection."""
from .bevgrid import GridSpec, MaskStack, compress_bev, parse_grid, pillarize, rasterize_class_masks
from .estimators import GTPainter, Pillarizer, SemanticPassingLoss
from .geometry import Calib, OrientedBox3D, PointCloud, box_bev_footprint, box_cam_to_lidar, point_in_box
from .kitti import parse_calib, parse_labels, parse_velodyne
from .painting import PaintedCloud, paint_categorical, paint_onehot
from .passing import (
    LossReport,
    PassingWeights,
    class_center,
    class_wise_loss,
    finite_diff_check,
    global_feature,
    instance_wise_loss,
    masked_kld,
    pixel_wise_loss,
    similarity_map,
    total_distill_loss,
)
from .tensor import tensor_create, tensor_read, tensor_write

__version__ = "0.1.0"
