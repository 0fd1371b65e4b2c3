"""Alignment quality between two pose sequences: joint positions and joint angles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quaternion as quat
from .errors import StructuralError
from .kinematics import local_rotations, world_rotation_sequence
from .skeleton import PoseSequence


@dataclass(frozen=True)
class AlignmentReport:
    """Errors pooled uniformly over (frame, joint) and (frame, bone) pairs.

    Attributes:
        mean_joint_position_error: millimetres.
        mean_joint_angle_error: degrees.
        per_joint_position_error: millimetres, one entry per joint, averaged over frames.
        per_bone_angle_error: degrees, one entry per bone (``topology.bones`` order).
        frame_count: number of frames compared.
    """

    mean_joint_position_error: float
    mean_joint_angle_error: float
    per_joint_position_error: np.ndarray
    per_bone_angle_error: np.ndarray
    frame_count: int
    joint_names: tuple[str, ...] = ()
    bone_names: tuple[str, ...] = ()

    def as_dict(self) -> dict[str, float | int]:
        """Flat key/value view used for serialisation."""
        out: dict[str, float | int] = {
            "frame_count": self.frame_count,
            "mean_joint_position_error_mm": self.mean_joint_position_error,
            "mean_joint_angle_error_deg": self.mean_joint_angle_error,
        }
        for name, v in zip(self.joint_names, self.per_joint_position_error):
            out[f"joint.{name}.position_error_mm"] = float(v)
        for name, v in zip(self.bone_names, self.per_bone_angle_error):
            out[f"bone.{name}.angle_error_deg"] = float(v)
        return out


def _check_pair(a: PoseSequence, b: PoseSequence) -> None:
    if a.topology != b.topology:
        raise StructuralError("sequences use different topologies")
    if len(a) != len(b):
        raise StructuralError(f"frame counts differ ({len(a)} vs {len(b)})")


def position_errors(a: PoseSequence, b: PoseSequence, root_relative: bool = False) -> np.ndarray:
    """``(T, J)`` joint distances in millimetres."""
    _check_pair(a, b)
    fa, fb = a.frames, b.frames
    if root_relative:
        r = a.topology.root
        fa = fa - fa[:, r : r + 1]
        fb = fb - fb[:, r : r + 1]
    return np.linalg.norm(fa - fb, axis=-1) * 1000.0


def angle_errors(a: PoseSequence, b: PoseSequence, threads: int = 1) -> np.ndarray:
    """``(T, B)`` geodesic angles between local bone rotations, in degrees."""
    _check_pair(a, b)
    topo = a.topology
    wa = world_rotation_sequence(a, threads)
    wb = world_rotation_sequence(b, threads)
    out = np.empty((len(a), topo.n_bones))
    for t in range(len(a)):
        la = local_rotations(wa[t], topo).quats
        lb = local_rotations(wb[t], topo).quats
        out[t] = np.degrees(quat.geodesic_angle(la, lb))
    return out


def mpjpe(a: PoseSequence, b: PoseSequence, root_relative: bool = False) -> float:
    """Mean per-joint position error in millimetres, no rigid alignment."""
    return float(np.mean(position_errors(a, b, root_relative)))


def joint_angle_error(a: PoseSequence, b: PoseSequence, threads: int = 1) -> float:
    """Mean geodesic angle between local bone rotations, in degrees."""
    return float(np.mean(angle_errors(a, b, threads)))


def alignment_report(a: PoseSequence, b: PoseSequence, root_relative: bool = False,
                     threads: int = 1) -> AlignmentReport:
    pos = position_errors(a, b, root_relative)
    ang = angle_errors(a, b, threads)
    per_joint = pos.mean(axis=0)
    per_bone = ang.mean(axis=0) if ang.size else np.zeros(0)
    return AlignmentReport(
        mean_joint_position_error=float(per_joint.mean()),
        mean_joint_angle_error=float(per_bone.mean()) if per_bone.size else 0.0,
        per_joint_position_error=per_joint,
        per_bone_angle_error=per_bone,
        frame_count=len(a),
        joint_names=a.topology.joint_names,
        bone_names=a.topology.bone_names,
    )
