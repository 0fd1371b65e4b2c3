"""Kinematic motion retargeting, alignment metrics, clothing thickness,
retrieval evaluation and a strip-normalisation reference, for gait data."""
from .clothing import Silhouette, non_overlap_area, relative_thickness, thickness_level
from .errors import GaitMatchError
from .evaluation import EmbeddingSet, evaluate_protocol, mean_average_precision, rank1
from .gon import GonParams, gon_forward, gon_fc_forward, gon_stats
from .kinematics import cal_q, forward_kinematics, local_rotations, retarget_frame, retarget_sequence
from .metrics import alignment_report, joint_angle_error, mpjpe
from .skeleton import (PoseSequence, RestPose, SkeletonTopology, bone_lengths, estimate_skeleton,
                       frame_average_shape, match_skeleton_lengths)
from .walker import WalkerSpec, synth_walker, walker_rest_pose

__version__ = "0.1.0"
