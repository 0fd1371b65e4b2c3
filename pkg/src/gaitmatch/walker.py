"""Deterministic 17-joint walking fixture.

Axes: +x forward (walking direction), +y left, +z up; metres. The layout is
12 limb/torso joints (shoulders, elbows, wrists, hips, knees, ankles) plus a
pelvis root and four axial/head joints (spine, neck, head, nose).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import quaternion as quat
from .errors import DomainError, FormatError, StructuralError
from .skeleton import PoseSequence, RestPose, SkeletonTopology

# (name, parent, reference joint, rest direction); parents precede children
_LAYOUT = (
    ("pelvis", None, None, None),
    ("spine", "pelvis", "l_hip", (0.0, 0.0, 1.0)),
    ("neck", "spine", "l_hip", (0.0, 0.0, 1.0)),
    ("head", "neck", "l_shoulder", (0.0, 0.0, 1.0)),
    ("nose", "head", "neck", (1.0, 0.0, 0.0)),
    ("l_shoulder", "neck", "spine", (0.0, 1.0, 0.0)),
    ("l_elbow", "l_shoulder", "neck", None),
    ("l_wrist", "l_elbow", "l_shoulder", None),
    ("r_shoulder", "neck", "spine", (0.0, -1.0, 0.0)),
    ("r_elbow", "r_shoulder", "neck", None),
    ("r_wrist", "r_elbow", "r_shoulder", None),
    ("l_hip", "pelvis", "spine", (0.0, 1.0, 0.0)),
    ("l_knee", "l_hip", "pelvis", (0.0, 0.0, -1.0)),
    ("l_ankle", "l_knee", "pelvis", (0.0, 0.0, -1.0)),
    ("r_hip", "pelvis", "spine", (0.0, -1.0, 0.0)),
    ("r_knee", "r_hip", "pelvis", (0.0, 0.0, -1.0)),
    ("r_ankle", "r_knee", "pelvis", (0.0, 0.0, -1.0)),
)

DEFAULT_BONE_LENGTHS = {
    "spine": 0.25, "neck": 0.25, "head": 0.18, "nose": 0.10,
    "l_shoulder": 0.18, "l_elbow": 0.29, "l_wrist": 0.26,
    "r_shoulder": 0.18, "r_elbow": 0.29, "r_wrist": 0.26,
    "l_hip": 0.10, "l_knee": 0.44, "l_ankle": 0.42,
    "r_hip": 0.10, "r_knee": 0.44, "r_ankle": 0.42,
}

ARM_ABDUCTION = np.radians(45.0)
ELBOW_BEND = np.radians(20.0)


def walker_topology() -> SkeletonTopology:
    names = [row[0] for row in _LAYOUT]
    idx = {n: i for i, n in enumerate(names)}
    parents = [-1 if p is None else idx[p] for _, p, _, _ in _LAYOUT]
    refs = [None if r is None else idx[r] for _, _, r, _ in _LAYOUT]
    return SkeletonTopology(tuple(names), tuple(parents), tuple(refs))


def _arm_directions(side: float) -> tuple[np.ndarray, np.ndarray]:
    upper = np.array([0.0, side * np.sin(ARM_ABDUCTION), -np.cos(ARM_ABDUCTION)])
    fore = np.array([np.sin(ELBOW_BEND), upper[1] * np.cos(ELBOW_BEND), upper[2] * np.cos(ELBOW_BEND)])
    return upper, fore / np.linalg.norm(fore)


def _flex(angle: float) -> np.ndarray:
    # positive angle swings a downward limb forward (+x) about the lateral axis
    return quat.from_axis_angle((0.0, 1.0, 0.0), -angle)


@dataclass(frozen=True)
class WalkerSpec:
    """Parameters of the synthetic walker.

    ``bone_lengths`` overrides entries of :data:`DEFAULT_BONE_LENGTHS` by
    child-joint name. ``noise`` is the std (rad) of per-frame Gaussian
    jitter on the six driven angles; only then does ``seed`` matter.
    """

    bone_lengths: dict = field(default_factory=dict)
    stride_frequency: float = 1.0
    stride_amplitude: float = 0.35
    arm_swing_amplitude: float = 0.30
    forward_speed: float = 1.2
    frame_count: int = 60
    frame_rate: float = 30.0
    seed: int = 0
    noise: float = 0.0

    def __post_init__(self):
        unknown = set(self.bone_lengths) - set(DEFAULT_BONE_LENGTHS)
        if unknown:
            raise StructuralError(f"unknown bones in bone_lengths: {sorted(unknown)}")
        for k, v in self.bone_lengths.items():
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"bone length {k!r} must be positive")
        if not self.stride_frequency >= 0 or not self.forward_speed >= 0:
            raise DomainError("stride_frequency and forward_speed must be >= 0")
        if int(self.frame_count) != self.frame_count or self.frame_count < 1:
            raise DomainError("frame_count must be an integer >= 1")
        if not self.frame_rate > 0:
            raise DomainError("frame_rate must be positive")
        if not self.noise >= 0:
            raise DomainError("noise must be >= 0")

    def lengths(self) -> dict[str, float]:
        return {**DEFAULT_BONE_LENGTHS, **{k: float(v) for k, v in self.bone_lengths.items()}}

    @classmethod
    def from_dict(cls, doc: dict) -> "WalkerSpec":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise StructuralError(f"unknown walker spec keys: {sorted(extra)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


def read_walker_spec(path) -> WalkerSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, path, exc.lineno, "json") from None
    if not isinstance(doc, dict):
        raise FormatError("walker spec must be a JSON object", path, 1, "json")
    return WalkerSpec.from_dict(doc)


def _pose(topo: SkeletonTopology, lengths: dict[str, float], dirs: dict[str, np.ndarray],
          root: np.ndarray) -> np.ndarray:
    pos = np.empty((topo.n_joints, 3))
    pos[topo.root] = root
    for c in topo.bones:
        name = topo.joint_names[c]
        pos[c] = pos[topo.parents[c]] + dirs[name] * lengths[name]
    return pos


def _rest_dirs() -> dict[str, np.ndarray]:
    dirs = {name: np.array(d) for name, _, _, d in _LAYOUT if d is not None}
    for side, s in (("l", 1.0), ("r", -1.0)):
        upper, fore = _arm_directions(s)
        dirs[f"{side}_elbow"] = upper
        dirs[f"{side}_wrist"] = fore
    return dirs


def _pelvis_height(lengths: dict[str, float]) -> float:
    return max(lengths["l_knee"] + lengths["l_ankle"], lengths["r_knee"] + lengths["r_ankle"])


def walker_rest_pose(spec: WalkerSpec | None = None) -> RestPose:
    """Standing A-pose, ankles on the ground, pelvis above the origin."""
    spec = spec or WalkerSpec()
    topo = walker_topology()
    lengths = spec.lengths()
    return RestPose(topo, _pose(topo, lengths, _rest_dirs(), np.array([0.0, 0.0, _pelvis_height(lengths)])))


def synth_walker(spec: WalkerSpec | None = None) -> PoseSequence:
    """Sinusoidal walk: hip/knee flexion at the stride frequency, antiphase arm swing,
    constant forward root speed. Same spec gives bit-identical output."""
    spec = spec or WalkerSpec()
    topo = walker_topology()
    lengths = spec.lengths()
    rest = _rest_dirs()
    height = _pelvis_height(lengths)
    n = int(spec.frame_count)
    t = np.arange(n) / spec.frame_rate
    phase = 2.0 * np.pi * spec.stride_frequency * t
    a, s = spec.stride_amplitude, spec.arm_swing_amplitude
    angles = np.stack(
        [
            a * np.sin(phase),           # left hip flexion
            -a * np.sin(phase),          # right hip flexion
            a * (1.0 - np.cos(phase)),   # left knee flexion
            a * (1.0 + np.cos(phase)),   # right knee flexion
            -s * np.sin(phase),          # left shoulder flexion
            s * np.sin(phase),           # right shoulder flexion
        ],
        axis=1,
    )
    if spec.noise > 0:
        angles = angles + np.random.default_rng(spec.seed).normal(0.0, spec.noise, angles.shape)
    # with zero amplitude the knee terms are exactly zero, so a static walker equals the rest pose
    down = np.array([0.0, 0.0, -1.0])
    frames = np.empty((n, topo.n_joints, 3))
    for f in range(n):
        hip_l, hip_r, knee_l, knee_r, sh_l, sh_r = angles[f]
        dirs = dict(rest)
        for side, hip, knee, sh in (("l", hip_l, knee_l, sh_l), ("r", hip_r, knee_r, sh_r)):
            if hip != 0.0 or knee != 0.0:
                dirs[f"{side}_knee"] = quat.rotate(_flex(hip), down)
                dirs[f"{side}_ankle"] = quat.rotate(_flex(hip - knee), down)
            if sh != 0.0:
                q = _flex(sh)
                dirs[f"{side}_elbow"] = quat.rotate(q, rest[f"{side}_elbow"])
                dirs[f"{side}_wrist"] = quat.rotate(q, rest[f"{side}_wrist"])
        root = np.array([spec.forward_speed * t[f], 0.0, height])
        frames[f] = _pose(topo, lengths, dirs, root)
    return PoseSequence(topo, frames, spec.frame_rate)
