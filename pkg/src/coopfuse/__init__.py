"""Non-neural core of keypoint-based cooperative vehicle detection."""
from .geometry import BBox7, Pose2, angle_diff_abs, bev_iou, iou_3d, normalize_angle, transform_box, transform_points
from .matching import Detection, MatchConfig, cluster_proposals, fuse_proposals, merge_cluster, nms_fuse
from .localization import ConsensusConfig, LandmarkClass, LandmarkPoint, PoseCorrection, correct_cpm
from .cpm import Cpm, cpm_size, decode_cpm, encode_cpm
from .simulator import Frame, NoiseModel, SimConfig, generate_frame, inject_loc_noise

__version__ = "0.1.0"
