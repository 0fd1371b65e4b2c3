"""Skeleton topology, pose containers and bone-length matching.

A bone is identified by its child joint: every non-root joint ``c`` owns the
bone ``(parent[c], c)``. Bone-indexed arrays follow ``topology.bones``, which
lists child joints in a parent-before-child order.

Poses are plain ``(J, 3)`` float arrays in metres; sequences stack them as
``(T, J, 3)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, EmptyInputError, StructuralError, TopologyError

# Angular tolerance (rad) below which a reference joint counts as on the bone axis.
COLLINEAR_TOL = 1e-6


@dataclass(frozen=True)
class SkeletonTopology:
    """Joint tree with one reference joint per bone.

    Attributes:
        joint_names: ordered joint identifiers.
        parents: parent index per joint, ``-1`` for the root.
        reference_joints: per joint, the index of a third joint fixing the
            bone's twist (``None`` for the root; ``None`` on a bone means
            no reference is available and the frame falls back to a world axis).
    """

    joint_names: tuple[str, ...]
    parents: tuple[int, ...]
    reference_joints: tuple[int | None, ...]
    order: tuple[int, ...] = field(init=False, repr=False, compare=False)
    bones: tuple[int, ...] = field(init=False, repr=False, compare=False)
    parent_bones: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(str(n) for n in self.joint_names)
        parents = tuple(int(p) for p in self.parents)
        refs = tuple(None if r is None or int(r) < 0 else int(r) for r in self.reference_joints)
        object.__setattr__(self, "joint_names", names)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "reference_joints", refs)

        n = len(names)
        if n == 0:
            raise StructuralError("topology needs at least one joint")
        if len(parents) != n or len(refs) != n:
            raise StructuralError(
                f"joint_names, parents and reference_joints differ in length ({n}, {len(parents)}, {len(refs)})"
            )
        if len(set(names)) != n:
            raise StructuralError("joint names must be unique")
        roots = [j for j, p in enumerate(parents) if p == -1]
        if len(roots) != 1:
            raise TopologyError(f"expected exactly one root, found {len(roots)}",
                                joint=names[roots[1]] if len(roots) > 1 else None)
        for j, p in enumerate(parents):
            if p < -1 or p >= n:
                raise TopologyError(f"joint {names[j]!r} has out-of-range parent {p}", joint=names[j])
            if p == j:
                raise TopologyError(f"joint {names[j]!r} is its own parent", joint=names[j])

        children: list[list[int]] = [[] for _ in range(n)]
        for j, p in enumerate(parents):
            if p >= 0:
                children[p].append(j)
        order = []
        stack = [roots[0]]
        while stack:
            j = stack.pop()
            order.append(j)
            stack.extend(reversed(children[j]))
        if len(order) != n:
            unreached = next(j for j in range(n) if j not in set(order))
            raise TopologyError(f"joint {names[unreached]!r} is on a cycle or detached from the root",
                                joint=names[unreached])

        for j, r in enumerate(refs):
            if r is None:
                continue
            if not 0 <= r < n:
                raise StructuralError(f"joint {names[j]!r} has out-of-range reference joint {r}")
            if r == j or r == parents[j]:
                raise StructuralError(f"reference joint of bone {names[j]!r} must differ from its endpoints")

        object.__setattr__(self, "order", tuple(order))
        bones = tuple(j for j in order if parents[j] >= 0)
        lookup = {c: b for b, c in enumerate(bones)}
        object.__setattr__(self, "bones", bones)
        # per bone, index of the bone ending at its parent joint, or -1
        object.__setattr__(self, "parent_bones", tuple(lookup.get(parents[c], -1) for c in bones))

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def n_bones(self) -> int:
        return len(self.bones)

    @property
    def root(self) -> int:
        return self.order[0]

    @property
    def bone_names(self) -> tuple[str, ...]:
        return tuple(self.joint_names[c] for c in self.bones)

    def bone_index(self, child: int) -> int:
        try:
            return self.bones.index(child)
        except ValueError:
            raise StructuralError(f"joint {child} does not terminate a bone") from None

    def joint_index(self, name: str) -> int:
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise StructuralError(f"unknown joint {name!r}") from None


def check_pose(pose, topology: SkeletonTopology) -> np.ndarray:
    pose = np.asarray(pose, dtype=float)
    if pose.shape != (topology.n_joints, 3):
        raise StructuralError(f"pose shape {pose.shape} does not match {topology.n_joints} joints")
    if not np.all(np.isfinite(pose)):
        raise DomainError("pose contains non-finite coordinates")
    return pose


@dataclass(frozen=True)
class PoseSequence:
    topology: SkeletonTopology
    frames: np.ndarray
    frame_rate: float = 30.0

    def __post_init__(self):
        frames = np.array(self.frames, dtype=float)
        if frames.ndim == 2:
            frames = frames[None]
        if frames.ndim != 3 or frames.shape[1:] != (self.topology.n_joints, 3):
            raise StructuralError(
                f"frames shape {frames.shape} does not match (T, {self.topology.n_joints}, 3)"
            )
        if frames.shape[0] < 1:
            raise EmptyInputError("a pose sequence needs at least one frame")
        if not np.all(np.isfinite(frames)):
            raise DomainError("pose sequence contains non-finite coordinates")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "frame_rate", float(self.frame_rate))

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class RestPose:
    """Canonical rest configuration; validated on construction.

    Every bone must have positive length and every named reference joint must
    sit off the bone axis by more than ``COLLINEAR_TOL`` radians.
    """

    topology: SkeletonTopology
    positions: np.ndarray

    def __post_init__(self):
        pos = check_pose(self.positions, self.topology).copy()
        topo = self.topology
        for c in topo.bones:
            p = topo.parents[c]
            v = pos[c] - pos[p]
            if not np.linalg.norm(v) > 0.0:
                raise DomainError(f"rest bone {topo.joint_names[c]!r} has zero length")
            r = topo.reference_joints[c]
            if r is not None and _off_axis_angle(v, pos[r] - pos[p]) <= COLLINEAR_TOL:
                raise DomainError(
                    f"reference joint {topo.joint_names[r]!r} is collinear with rest bone {topo.joint_names[c]!r}"
                )
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def root_position(self) -> np.ndarray:
        return self.positions[self.topology.root]


def _off_axis_angle(axis: np.ndarray, v: np.ndarray) -> float:
    """Angle between ``v`` and the line spanned by ``axis``; 0 when degenerate."""
    na = np.linalg.norm(axis)
    nv = np.linalg.norm(v)
    if na == 0.0 or nv == 0.0:
        return 0.0
    cross = np.linalg.norm(np.cross(axis, v))
    return float(np.arctan2(cross, abs(np.dot(axis, v))))


def bone_lengths(pose, topology: SkeletonTopology) -> np.ndarray:
    """Euclidean length of every bone, ordered as ``topology.bones``."""
    pose = check_pose(pose, topology)
    child = np.array(topology.bones, dtype=int)
    parent = np.array([topology.parents[c] for c in topology.bones], dtype=int)
    return np.linalg.norm(pose[child] - pose[parent], axis=-1)


def estimate_skeleton(seq: PoseSequence, aggregator: str = "median") -> np.ndarray:
    """Per-bone aggregate of the per-frame bone lengths.

    The median default shrugs off isolated tracking glitches; ``"mean"`` is
    available when every frame is trusted.
    """
    frames = np.asarray(seq.frames)
    if frames.shape[0] == 0:
        raise EmptyInputError("cannot estimate a skeleton from an empty sequence")
    per_frame = np.stack([bone_lengths(f, seq.topology) for f in frames])
    if aggregator == "median":
        return np.median(per_frame, axis=0)
    if aggregator == "mean":
        return per_frame.mean(axis=0)
    raise DomainError(f"unknown aggregator {aggregator!r}; expected 'mean' or 'median'")


def match_skeleton_lengths(rest: RestPose, target_lengths) -> RestPose:
    """Rebuild ``rest`` root-outward with new bone lengths, keeping every bone direction."""
    topo = rest.topology
    lengths = np.asarray(target_lengths, dtype=float)
    if lengths.shape != (topo.n_bones,):
        raise StructuralError(f"expected {topo.n_bones} bone lengths, got shape {lengths.shape}")
    bad = ~(np.isfinite(lengths) & (lengths > 0.0))
    if bad.any():
        name = topo.bone_names[int(np.argmax(bad))]
        raise DomainError(f"target length of bone {name!r} must be positive and finite")

    src = rest.positions
    out = np.empty_like(src)
    out[topo.root] = src[topo.root]
    for b, c in enumerate(topo.bones):
        p = topo.parents[c]
        v = src[c] - src[p]
        out[c] = out[p] + v / np.linalg.norm(v) * lengths[b]
    return RestPose(topo, out)


def frame_average_shape(per_frame: Sequence[Mapping[str, float]]) -> dict[str, float]:
    """Average named body measurements over frames."""
    if len(per_frame) == 0:
        raise EmptyInputError("no shape profiles to average")
    names = list(per_frame[0].keys())
    for i, prof in enumerate(per_frame):
        if set(prof.keys()) != set(names):
            raise StructuralError(f"profile {i} measurement names differ from profile 0")
        for k, v in prof.items():
            if not v > 0:
                raise DomainError(f"measurement {k!r} in profile {i} must be positive")
    return {k: float(np.mean([prof[k] for prof in per_frame])) for k in names}
