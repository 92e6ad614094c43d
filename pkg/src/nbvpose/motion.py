"""Ground-truth subject motion: CSV ingestion and synthetic generators.

The generators stand in for recorded clips: walking straight, running on a
circle and twirling in place. Each frame is the template skeleton with its
limb chains rotated rigidly about their root joints and then placed in the
world by a heading rotation and a hip translation, so bone lengths are exactly
constant.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, TopologyError
from .skeleton import HIP, NUM_JOINTS, as_pose, compute_bone_lengths, template_pose

BONE_DRIFT_TOL = 1e-3
COORD_COLUMNS = tuple(f"j{j}_{c}" for j in range(NUM_JOINTS) for c in "xyz")
CSV_HEADER = ("frame", "fps") + COORD_COLUMNS


@dataclass(frozen=True, eq=False)
class MotionSequence:
    frames: np.ndarray
    fps: float
    name: str = "sequence"

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[1:] != (NUM_JOINTS, 3):
            raise ValueError(f"frames must have shape (n, {NUM_JOINTS}, 3)")
        if len(frames) < 2:
            raise ValueError("a motion sequence needs at least 2 frames")
        if not np.all(np.isfinite(frames)):
            raise ValueError("frame coordinates must be finite")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, i) -> np.ndarray:
        return self.frames[i]

    def bone_drift(self) -> float:
        """Largest deviation of any bone length from its first-frame value."""
        lengths = compute_bone_lengths(self.frames)
        return float(np.max(np.abs(lengths - lengths[0])))


def save_sequence_csv(seq: MotionSequence, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for i, pose in enumerate(seq.frames):
            writer.writerow([i, repr(float(seq.fps))] + [repr(float(c)) for c in pose.ravel()])


def load_sequence_csv(path, fps=None, name=None) -> MotionSequence:
    """Read a sequence written in the ``frame,fps,j0_x,...,j14_z`` layout.

    ``fps`` overrides the per-row column, which may then be left empty.
    """
    path = Path(path)
    rows = []
    rates = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        if len(header) != len(CSV_HEADER):
            raise ParseError(f"{path}: header has {len(header)} columns, expected {len(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ParseError(f"{path}:{lineno}: {len(row)} columns, expected {len(CSV_HEADER)}")
            try:
                coords = [float(c) for c in row[2:]]
                if row[1].strip():
                    rates.add(float(row[1]))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            rows.append(coords)
    if len(rows) < 2:
        raise ParseError(f"{path}: need at least 2 frames, found {len(rows)}")
    if fps is None:
        if len(rates) != 1:
            raise ParseError(f"{path}: frame rate missing or inconsistent; pass fps explicitly")
        fps = rates.pop()
    frames = np.asarray(rows).reshape(-1, NUM_JOINTS, 3)
    if not np.all(np.isfinite(frames)):
        raise ParseError(f"{path}: non-finite coordinates")
    seq = MotionSequence(frames, float(fps), name or path.stem)
    drift = seq.bone_drift()
    if drift > BONE_DRIFT_TOL:
        raise TopologyError(f"{path}: bone lengths drift by {drift:.4g} m across frames")
    return seq


def _axis_rotation(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    cross = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
    return c * np.eye(3) + s * cross + (1 - c) * np.outer(axis, axis)


def _rotate_chain(pose, root, chain, axis, angle):
    rot = _axis_rotation(axis, angle)
    pose[chain] = (pose[chain] - pose[root]) @ rot.T + pose[root]


_LATERAL = np.array([0.0, 1.0, 0.0])


def _articulate(phase, amplitude, arms_out=0.0) -> np.ndarray:
    """Template with legs and arms swung by ``amplitude`` radians at gait ``phase``."""
    pose = template_pose()
    swing = amplitude * np.sin(phase)
    bend = 0.5 * amplitude * (1 - np.cos(phase))
    # legs swing in antiphase, knees flex on the back swing
    _rotate_chain(pose, 9, [10, 11], _LATERAL, swing)
    _rotate_chain(pose, 10, [11], _LATERAL, -bend)
    _rotate_chain(pose, 12, [13, 14], _LATERAL, -swing)
    _rotate_chain(pose, 13, [14], _LATERAL, -(0.5 * amplitude * (1 + np.cos(phase))))
    # arms counter-swing, optionally raised sideways
    if arms_out:
        _rotate_chain(pose, 3, [4, 5], [1.0, 0.0, 0.0], -arms_out)
        _rotate_chain(pose, 6, [7, 8], [1.0, 0.0, 0.0], arms_out)
    _rotate_chain(pose, 3, [4, 5], _LATERAL, -0.8 * swing)
    _rotate_chain(pose, 6, [7, 8], _LATERAL, 0.8 * swing)
    return pose


def _place(local, heading, hip_xy) -> np.ndarray:
    """Rotate a local pose about its hip by ``heading`` and move the hip to ``hip_xy``."""
    rot = _axis_rotation([0.0, 0.0, 1.0], heading)
    hip = local[HIP].copy()
    world = (local - hip) @ rot.T
    world[:, :2] += hip_xy
    world[:, 2] += hip[2]
    return world


def synth_walk(n_frames=120, speed=1.0, rate=5.0, heading=0.0, stride_hz=1.0) -> MotionSequence:
    """Walk along ``heading`` at constant ``speed``; the hip advances ``speed / rate`` per frame."""
    if n_frames < 2:
        raise ValueError("n_frames must be >= 2")
    direction = np.array([np.cos(heading), np.sin(heading)])
    frames = []
    for i in range(n_frames):
        t = i / rate
        local = _articulate(2 * np.pi * stride_hz * t, 0.35)
        frames.append(_place(local, heading, direction * speed * t))
    return MotionSequence(np.stack(frames), rate, "synth_walk")


def synth_circle_run(n_frames=120, radius=3.0, angular_speed=0.5, rate=5.0, center=(0.0, 0.0)) -> MotionSequence:
    """Run counter-clockwise on a circle; the hip stays at ``radius`` from ``center``."""
    if n_frames < 2:
        raise ValueError("n_frames must be >= 2")
    center = np.asarray(center, dtype=np.float64)
    frames = []
    for i in range(n_frames):
        t = i / rate
        angle = angular_speed * t
        hip_xy = center + radius * np.array([np.cos(angle), np.sin(angle)])
        local = _articulate(2 * np.pi * 1.5 * t, 0.6)
        frames.append(_place(local, angle + np.pi / 2, hip_xy))
    return MotionSequence(np.stack(frames), rate, "synth_circle_run")


def synth_twirl_in_place(n_frames=120, angular_speed=1.5, rate=5.0, position=(0.0, 0.0)) -> MotionSequence:
    """Spin about the vertical axis through a fixed hip with arms raised."""
    if n_frames < 2:
        raise ValueError("n_frames must be >= 2")
    position = np.asarray(position, dtype=np.float64)
    frames = []
    for i in range(n_frames):
        t = i / rate
        local = _articulate(2 * np.pi * 0.5 * t, 0.2, arms_out=1.0)
        frames.append(_place(local, angular_speed * t, position))
    return MotionSequence(np.stack(frames), rate, "synth_twirl_in_place")


def static_sequence(pose=None, n_frames=2, rate=5.0) -> MotionSequence:
    pose = template_pose() if pose is None else as_pose(pose)
    return MotionSequence(np.repeat(pose[None], n_frames, axis=0), rate, "static")


SYNTHETIC = {
    "walk": synth_walk,
    "circle_run": synth_circle_run,
    "twirl": synth_twirl_in_place,
    "static": lambda n_frames=120, rate=5.0: static_sequence(n_frames=n_frames, rate=rate),
}
# generator function names work as sources too
SYNTHETIC.update({f.__name__: f for f in (synth_walk, synth_circle_run, synth_twirl_in_place)})


def make_sequence(source: str, n_frames=120, rate=5.0) -> MotionSequence:
    """Resolve a sequence source: a synthetic generator name or a CSV path."""
    if source in SYNTHETIC:
        return SYNTHETIC[source](n_frames=n_frames, rate=rate)
    seq = load_sequence_csv(source)
    if len(seq) < n_frames:
        raise ValueError(f"{source}: {len(seq)} frames, {n_frames} requested")
    return MotionSequence(seq.frames[:n_frames], seq.fps, seq.name)

