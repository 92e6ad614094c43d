"""Skeleton topology, pose arrays and the MPJPE metric.

A pose is a ``(15, 3)`` float array of absolute joint positions in meters,
world frame (z up). Joint 0 is the hip (pelvis root). The joint order is a
fixed convention of this package:

====  ============
idx   joint
====  ============
0     hip
1     neck
2     head
3     l_shoulder
4     l_elbow
5     l_wrist
6     r_shoulder
7     r_elbow
8     r_wrist
9     l_hip
10    l_knee
11    l_ankle
12    r_hip
13    r_knee
14    r_ankle
====  ============
"""

from dataclasses import dataclass

import numpy as np

JOINT_NAMES = (
    "hip", "neck", "head",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
)
NUM_JOINTS = len(JOINT_NAMES)
HIP = 0


@dataclass(frozen=True)
class BoneTopology:
    """Bones as ``(parent, child)`` joint pairs plus left/right bone pairing."""

    bones: tuple
    mirror_pairs: tuple = ()

    def __post_init__(self):
        bones = tuple(tuple(int(i) for i in b) for b in self.bones)
        object.__setattr__(self, "bones", bones)
        object.__setattr__(self, "mirror_pairs", tuple(tuple(int(i) for i in p) for p in self.mirror_pairs))
        for a, b in bones:
            if not (0 <= a < NUM_JOINTS and 0 <= b < NUM_JOINTS) or a == b:
                raise ValueError(f"invalid bone ({a}, {b})")
        children = [b for _, b in bones]
        if len(set(children)) != len(children) or HIP in children:
            raise ValueError("bones must form a tree rooted at the hip")
        for left, right in self.mirror_pairs:
            if left == right or not (0 <= left < len(bones) and 0 <= right < len(bones)):
                raise ValueError(f"invalid mirror pair ({left}, {right})")

    @property
    def index(self) -> np.ndarray:
        """Bones as an ``(B, 2)`` integer array."""
        return np.asarray(self.bones, dtype=np.intp).reshape(-1, 2)

    def __len__(self):
        return len(self.bones)


DEFAULT_TOPOLOGY = BoneTopology(
    bones=(
        (0, 1), (1, 2),
        (1, 3), (3, 4), (4, 5),
        (1, 6), (6, 7), (7, 8),
        (0, 9), (9, 10), (10, 11),
        (0, 12), (12, 13), (13, 14),
    ),
    mirror_pairs=((2, 5), (3, 6), (4, 7), (8, 11), (9, 12), (10, 13)),
)

# bone indices summed for the stature measure used by initialization
_TRUNK_BONES = (0, 1)
_LEG_BONES = ((9, 10), (12, 13))


def as_pose(joints) -> np.ndarray:
    """Validate and return a ``(15, 3)`` float64 copy of ``joints``."""
    pose = np.array(joints, dtype=np.float64)
    if pose.shape != (NUM_JOINTS, 3):
        raise ValueError(f"pose must have shape ({NUM_JOINTS}, 3), got {pose.shape}")
    if not np.all(np.isfinite(pose)):
        raise ValueError("pose coordinates must be finite")
    return pose


def compute_bone_lengths(pose, topo: BoneTopology = DEFAULT_TOPOLOGY) -> np.ndarray:
    """Euclidean length of every bone; works on a single pose or a ``(..., 15, 3)`` stack."""
    pose = np.asarray(pose, dtype=np.float64)
    idx = topo.index
    return np.linalg.norm(pose[..., idx[:, 0], :] - pose[..., idx[:, 1], :], axis=-1)


def mpjpe(estimated, truth) -> float:
    """Mean per-joint position error in meters."""
    estimated = np.asarray(estimated, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimated.shape != truth.shape:
        raise ValueError("poses must have the same shape")
    return float(np.mean(np.linalg.norm(estimated - truth, axis=-1)))


def stature(pose, topo: BoneTopology = DEFAULT_TOPOLOGY) -> float:
    """Head-to-ankle length along the bones (trunk plus the mean of both legs)."""
    lengths = compute_bone_lengths(pose, topo)
    legs = [lengths[list(leg)].sum() for leg in _LEG_BONES]
    return float(lengths[list(_TRUNK_BONES)].sum() + np.mean(legs))


def template_pose() -> np.ndarray:
    """Rest pose facing +x with the hip at (0, 0, 1); stature is 1.75 m."""
    return as_pose([
        [0.0, 0.00, 1.00],   # hip
        [0.0, 0.00, 1.55],   # neck
        [0.0, 0.00, 1.80],   # head
        [0.0, 0.18, 1.50],   # l_shoulder
        [0.0, 0.20, 1.22],   # l_elbow
        [0.0, 0.21, 0.96],   # l_wrist
        [0.0, -0.18, 1.50],  # r_shoulder
        [0.0, -0.20, 1.22],  # r_elbow
        [0.0, -0.21, 0.96],  # r_wrist
        [0.0, 0.10, 0.98],   # l_hip
        [0.0, 0.11, 0.50],   # l_knee
        [0.0, 0.12, 0.03],   # l_ankle
        [0.0, -0.10, 0.98],  # r_hip
        [0.0, -0.11, 0.50],  # r_knee
        [0.0, -0.12, 0.03],  # r_ankle
    ])
