"""Bone frames, quaternion extraction, retargeting and forward kinematics.

Frame convention: a bone's local frame is the rotation matrix whose columns
are ``(secondary, primary, tertiary)``, i.e. the bone runs along local +Y
(as in common DCC rigs), the reference plane fixes local +X and
``tertiary = secondary x primary`` completes a right-handed basis. A bone
lying along world +Y with its reference towards world +X therefore has the
identity frame.

Drive rotations are expressed in the accumulated frame of the parent chain:
forward kinematics composes ``G(k) = G(parent) ⊗ D(k)`` and rotates each rest
bone vector by ``G(k)``. With ``W_s``/``W_t`` the world bone rotations of the
rest and animated poses and ``ΔQ_t(k) = conj(W_t(parent)) ⊗ W_t(k)``:

    root-level bone:  D = W_t ⊗ conj(W_s)
    other bones:      D = W_s(parent) ⊗ ΔQ_t(k) ⊗ conj(W_s(k))

Both collapse to the identity when the animated pose equals the rest pose.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import quaternion as quat
from .errors import CollinearityError, DegenerateBoneError, GaitMatchError, StructuralError
from .skeleton import COLLINEAR_TOL, PoseSequence, RestPose, SkeletonTopology, check_pose

WORLD = "world"
LOCAL = "local"


@dataclass(frozen=True)
class LocalFrame:
    primary: np.ndarray
    secondary: np.ndarray
    tertiary: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.column_stack([self.secondary, self.primary, self.tertiary])


@dataclass(frozen=True)
class BoneRotationSet:
    """One unit quaternion per bone (``topology.bones`` order) for a single frame."""

    quats: np.ndarray
    space: str

    def __post_init__(self):
        q = np.array(self.quats, dtype=float)
        if q.ndim != 2 or q.shape[1] != 4:
            raise StructuralError(f"expected (B, 4) quaternions, got {q.shape}")
        if self.space not in (WORLD, LOCAL):
            raise StructuralError(f"unknown rotation space {self.space!r}")
        q.setflags(write=False)
        object.__setattr__(self, "quats", q)

    def __len__(self) -> int:
        return self.quats.shape[0]


@dataclass(frozen=True)
class RetargetResult:
    drive: tuple[BoneRotationSet, ...]
    sequence: PoseSequence


def build_local_frame(parent_pos, child_pos, reference_pos) -> LocalFrame:
    """Orthonormal frame of the bone ``parent -> child`` twisted towards ``reference``.

    Raises:
        DegenerateBoneError: parent and child coincide.
        CollinearityError: reference lies within ``COLLINEAR_TOL`` rad of the bone line.
    """
    parent_pos = np.asarray(parent_pos, dtype=float)
    v = np.asarray(child_pos, dtype=float) - parent_pos
    n = np.linalg.norm(v)
    if not n > 0.0:
        raise DegenerateBoneError("bone has zero length")
    primary = v / n
    r = np.asarray(reference_pos, dtype=float) - parent_pos
    rn = np.linalg.norm(r)
    if rn == 0.0 or np.arctan2(np.linalg.norm(np.cross(primary, r)), abs(primary @ r)) <= COLLINEAR_TOL:
        raise CollinearityError("reference joint is collinear with the bone")
    return _complete_frame(primary, r)


def _complete_frame(primary: np.ndarray, hint: np.ndarray) -> LocalFrame:
    s = hint - (hint @ primary) * primary
    s = s / np.linalg.norm(s)
    # one Gram-Schmidt refinement keeps orthogonality at the 1e-16 level
    s = s - (s @ primary) * primary
    s = s / np.linalg.norm(s)
    t = np.cross(s, primary)
    return LocalFrame(primary, s, t / np.linalg.norm(t))


def _least_aligned_axis(primary: np.ndarray) -> np.ndarray:
    return np.eye(3)[int(np.argmin(np.abs(primary)))]


def bone_frames(
    pose,
    topology: SkeletonTopology,
    previous: list[LocalFrame] | None = None,
    fallback: bool = False,
) -> list[LocalFrame]:
    """Local frame of every bone of one pose.

    With ``fallback`` a collinear (or missing) reference reuses the secondary
    axis from ``previous`` when given, else the world axis least aligned
    with the bone. Without it the collinearity error propagates.
    """
    pose = check_pose(pose, topology)
    frames = []
    for b, c in enumerate(topology.bones):
        p = topology.parents[c]
        r = topology.reference_joints[c]
        name = topology.joint_names[c]
        try:
            if r is None:
                raise CollinearityError("bone has no reference joint")
            frames.append(build_local_frame(pose[p], pose[c], pose[r]))
        except DegenerateBoneError as exc:
            raise DegenerateBoneError(f"bone {name!r}: {exc}", bone=name) from None
        except CollinearityError as exc:
            if not fallback:
                raise CollinearityError(f"bone {name!r}: {exc}", bone=name) from None
            v = pose[c] - pose[p]
            primary = v / np.linalg.norm(v)
            hint = None
            if previous is not None:
                hint = previous[b].secondary
                if np.linalg.norm(np.cross(primary, hint)) <= np.sin(COLLINEAR_TOL):
                    hint = None
            if hint is None:
                hint = _least_aligned_axis(primary)
            frames.append(_complete_frame(primary, hint))
    return frames


def _frames_to_rotations(frames: list[LocalFrame]) -> BoneRotationSet:
    return BoneRotationSet(np.array([quat.from_matrix(f.matrix) for f in frames]).reshape(-1, 4), WORLD)


def cal_q(pose, topology: SkeletonTopology, fallback: bool = False) -> BoneRotationSet:
    """World rotation of every bone frame (canonical sign).

    ``fallback`` resolves collinear or missing references with the world
    axis least aligned with the bone instead of raising.
    """
    return _frames_to_rotations(bone_frames(pose, topology, fallback=fallback))


def local_rotations(world: BoneRotationSet, topology: SkeletonTopology) -> BoneRotationSet:
    """Parent-relative rotations ``conj(W(parent)) ⊗ W(k)``; root-level bones keep their world rotation."""
    if world.space != WORLD:
        raise StructuralError("local_rotations expects world-space rotations")
    if len(world) != topology.n_bones:
        raise StructuralError(f"expected {topology.n_bones} rotations, got {len(world)}")
    w = world.quats
    pb = np.array(topology.parent_bones)
    parent_q = np.where((pb >= 0)[:, None], w[np.maximum(pb, 0)], quat.IDENTITY)
    return BoneRotationSet(quat.canonical(quat.qmul(quat.conj(parent_q), w)), LOCAL)


def _drive(rest_world: BoneRotationSet, target_world: BoneRotationSet, topology: SkeletonTopology) -> BoneRotationSet:
    ws = rest_world.quats
    wt = target_world.quats
    delta = local_rotations(target_world, topology).quats
    out = np.empty_like(ws)
    for b, pb in enumerate(topology.parent_bones):
        if pb < 0:
            q = quat.qmul(wt[b], quat.conj(ws[b]))
        else:
            q = quat.qmul(quat.qmul(ws[pb], delta[b]), quat.conj(ws[b]))
        out[b] = q
    return BoneRotationSet(quat.canonical(out), LOCAL)


def retarget_frame(rest: RestPose, target_pose, topology: SkeletonTopology | None = None) -> BoneRotationSet:
    """Drive rotations that carry ``rest`` onto ``target_pose``."""
    topology = topology or rest.topology
    if topology != rest.topology:
        raise StructuralError("rest pose and target pose use different topologies")
    return _drive(cal_q(rest.positions, topology), cal_q(target_pose, topology), topology)


def forward_kinematics(rest: RestPose, drive: BoneRotationSet, root_position=None) -> np.ndarray:
    """Joint positions after applying ``drive`` hierarchically to ``rest``.

    Each bone's rest vector (direction times rest length) is rotated by the
    composed drive of its parent chain and attached to the parent joint.
    """
    topo = rest.topology
    if len(drive) != topo.n_bones:
        raise StructuralError(f"expected {topo.n_bones} drive rotations, got {len(drive)}")
    rest_pos = rest.positions
    out = np.empty_like(rest_pos)
    out[topo.root] = rest.root_position if root_position is None else np.asarray(root_position, dtype=float)
    acc = np.empty((topo.n_bones, 4))
    for b, c in enumerate(topo.bones):
        pb = topo.parent_bones[b]
        acc[b] = drive.quats[b] if pb < 0 else quat.qmul(acc[pb], drive.quats[b])
        p = topo.parents[c]
        out[c] = out[p] + quat.rotate(acc[b], rest_pos[c] - rest_pos[p])
    return out


def world_rotation_sequence(seq: PoseSequence, threads: int = 1) -> list[BoneRotationSet]:
    """World bone rotations of every frame, resolving collinear references.

    Frames are first solved independently (optionally in parallel). Frames
    whose reference joints are collinear are then resolved serially in frame
    order, reusing the previous frame's secondary axis, so the result does
    not depend on ``threads``.
    """
    topo = seq.topology
    frames = seq.frames

    def attempt(t):
        try:
            return bone_frames(frames[t], topo)
        except CollinearityError:
            return None
        except GaitMatchError as exc:
            _attach_frame(exc, t)
            raise

    solved = _map(attempt, range(len(frames)), threads)
    for t, fr in enumerate(solved):
        if fr is None:
            prev = solved[t - 1] if t > 0 else None
            solved[t] = bone_frames(frames[t], topo, previous=prev, fallback=True)
    return _map(_frames_to_rotations, solved, threads)


def retarget_sequence(
    source: PoseSequence,
    source_rest: RestPose,
    target_rest: RestPose,
    threads: int = 1,
) -> RetargetResult:
    """Retarget every frame of ``source`` onto ``target_rest``.

    Drive rotations are measured against ``source_rest``; the root joint follows
    the source root trajectory.
    """
    topo = source.topology
    if source_rest.topology != topo or target_rest.topology != topo:
        raise StructuralError("source, source rest and target rest must share one topology")
    rest_world = cal_q(source_rest.positions, topo)
    worlds = world_rotation_sequence(source, threads)
    root = topo.root

    def solve(t):
        try:
            d = _drive(rest_world, worlds[t], topo)
            return d, forward_kinematics(target_rest, d, source.frames[t, root])
        except GaitMatchError as exc:
            _attach_frame(exc, t)
            raise

    results = _map(solve, range(len(source)), threads)
    drive = tuple(d for d, _ in results)
    poses = np.stack([p for _, p in results])
    return RetargetResult(drive, PoseSequence(topo, poses, source.frame_rate))


def _attach_frame(exc: Exception, t: int) -> None:
    if getattr(exc, "frame", None) is None:
        try:
            exc.frame = t
        except AttributeError:
            pass
    if f"frame {t}" not in str(exc.args[0] if exc.args else ""):
        exc.args = (f"frame {t}: {exc.args[0] if exc.args else exc}",) + tuple(exc.args[1:])


def _map(fn, items, threads: int) -> list:
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
