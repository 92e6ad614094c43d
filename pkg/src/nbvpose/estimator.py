"""Space-time MAP pose estimation over a sliding window of frames.

The window energy is the weighted sum of four terms:

* projection: squared pixel distance between 2D detections and the projected
  joints of every observed frame,
* lift: squared distance between the scaled, hip-relative 3D detection
  (rotated into the world frame) and the hip-relative estimate,
* smoothness: squared joint displacement between consecutive frames,
* bone: squared deviation of every bone length from the calibrated length.

It is minimized by gradient descent with a backtracking (Armijo) line search.
The trial step of each iteration is the Barzilai-Borwein step, which keeps the
descent first-order but converges far faster on this badly scaled problem.
"""

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import kernels
from .errors import (
    DegenerateDetection,
    DivergedError,
    InsufficientViews,
    NonPositiveDepth,
)
from .geometry import CameraPose, Intrinsics, back_project, project
from .sensing import Detection2D, Detection3D
from .skeleton import DEFAULT_TOPOLOGY, NUM_JOINTS, BoneTopology, compute_bone_lengths, stature

AVERAGE_HEIGHT = 1.75


@dataclass(frozen=True)
class EnergyWeights:
    omega_p: float = 0.0001
    omega_s: float = 1.0
    omega_l: float = 0.1
    omega_b: float = 1.0

    def __post_init__(self):
        if min(self.omega_p, self.omega_s, self.omega_l, self.omega_b) < 0:
            raise ValueError("energy weights must be non-negative")

    @classmethod
    def reconstruction(cls):
        return cls(0.0001, 1.0, 0.1, 1.0)

    @classmethod
    def decision(cls):
        return cls(0.001, 1.0, 0.1, 1.0)

    def as_tuple(self):
        return (self.omega_p, self.omega_s, self.omega_l, self.omega_b)

    def scaled(self, factor):
        return EnergyWeights(*(factor * w for w in self.as_tuple()))


class Measurement(NamedTuple):
    detection2d: Detection2D
    detection3d: Detection3D
    camera: CameraPose


@dataclass(eq=False)
class EstimationWindow:
    """Pose variables of consecutive frames and the measurements attached to them.

    ``poses`` holds every frame of the window, oldest first: ``k_past`` past
    frames, the current frame and ``horizon`` future frames. ``measurements``
    has one entry per frame, ``None`` where nothing has been observed.
    """

    poses: np.ndarray
    measurements: list
    k_past: int = 2
    horizon: int = 0
    lift_scale: float = 1.0
    frames: Optional[Sequence[int]] = None

    def __post_init__(self):
        self.poses = np.array(self.poses, dtype=np.float64)
        if self.poses.ndim != 3 or self.poses.shape[1:] != (NUM_JOINTS, 3):
            raise ValueError("window poses must have shape (F, 15, 3)")
        self.measurements = list(self.measurements)
        if len(self.measurements) != len(self.poses):
            raise ValueError("need one measurement slot per window frame")

    def __len__(self):
        return len(self.poses)

    @property
    def observed(self) -> np.ndarray:
        return np.array([m is not None for m in self.measurements])

    @property
    def middle(self) -> int:
        """Index of the middle frame among the non-future frames."""
        return (len(self) - self.horizon - 1) // 2

    def copy(self):
        return replace(self, poses=self.poses.copy(), measurements=list(self.measurements))

    def with_poses(self, poses):
        return replace(self, poses=np.array(poses, dtype=np.float64), measurements=list(self.measurements))


class EnergyBreakdown(NamedTuple):
    total: float
    proj: float
    smooth: float
    lift: float
    bone: float


class WindowProblem:
    """Packs a window into the flat arrays the kernels consume."""

    def __init__(self, window: EstimationWindow, w: EnergyWeights, calib, k: Intrinsics,
                 topo: BoneTopology = DEFAULT_TOPOLOGY):
        F = len(window)
        self.shape = window.poses.shape
        self.obs = np.zeros(F, dtype=np.uint8)
        self.M = np.zeros((F, NUM_JOINTS, 2))
        self.R = np.tile(np.eye(3), (F, 1, 1))
        self.C = np.zeros((F, 3))
        self.Lw = np.zeros((F, NUM_JOINTS, 3))
        for f, meas in enumerate(window.measurements):
            if meas is None:
                continue
            self.obs[f] = 1
            self.M[f] = meas.detection2d.joints2d
            self.R[f] = meas.camera.rotation
            self.C[f] = meas.camera.position
            # camera-frame detection rotated to the world: R^T L for row vectors is L @ R
            self.Lw[f] = window.lift_scale * (np.asarray(meas.detection3d.joints3d_rel) @ meas.camera.rotation)
        self.bones = np.ascontiguousarray(topo.index)
        self.calib = np.ascontiguousarray(calib, dtype=np.float64)
        if self.calib.shape != (len(topo),):
            raise ValueError("calibrated lengths must have one entry per bone")
        self.intr = (float(k.fx), float(k.fy), float(k.cx), float(k.cy))
        self.weights = tuple(float(v) for v in w.as_tuple())
        self._terms = np.zeros(4)

    def _args(self, X):
        return (np.ascontiguousarray(X, dtype=np.float64).reshape(self.shape), self.obs, self.M, self.R,
                self.C, self.Lw, self.bones, self.calib, self.intr, self.weights)

    def energy(self, X) -> EnergyBreakdown:
        total = kernels.energy_grad(*self._args(X), self._terms, None)
        return EnergyBreakdown(float(total), *map(float, self._terms))

    def energy_grad(self, X):
        grad = np.empty(self.shape)
        total = kernels.energy_grad(*self._args(X), self._terms, grad)
        return float(total), grad

    def hessian(self, X) -> np.ndarray:
        n = int(np.prod(self.shape))
        H = np.empty((n, n))
        kernels.hessian(*self._args(X), H)
        return H


def energy_pose(window, w, calib, k, topo=DEFAULT_TOPOLOGY) -> EnergyBreakdown:
    return WindowProblem(window, w, calib, k, topo).energy(window.poses)


def energy_gradient(window, w, calib, k, topo=DEFAULT_TOPOLOGY) -> np.ndarray:
    return WindowProblem(window, w, calib, k, topo).energy_grad(window.poses)[1]


def fit_lift_scale(detection: Detection3D, calib, topo: BoneTopology = DEFAULT_TOPOLOGY) -> float:
    """Least-squares factor ``m`` that maps detected bone lengths onto ``calib``."""
    lengths = compute_bone_lengths(detection.joints3d_rel, topo)
    denom = float(lengths @ lengths)
    if denom < 1e-12:
        raise DegenerateDetection("detected bone lengths are all zero")
    return float(lengths @ np.asarray(calib, dtype=np.float64)) / denom


@dataclass(frozen=True)
class MinimizeOptions:
    tol_g: float = 1e-6
    max_iters: int = 500
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 60
    initial_step: float = 0.1


@dataclass
class DescentResult:
    x: np.ndarray
    energy: float
    initial_energy: float
    iterations: int
    grad_inf_norm: float
    converged: bool
    history: list = field(default_factory=list)


def gradient_descent(fun_grad, x0, opts: MinimizeOptions = MinimizeOptions(), free=None) -> DescentResult:
    """Minimize ``fun_grad(x) -> (f, g)`` by backtracking gradient descent.

    ``free`` is an optional boolean mask over ``x``; masked-out entries stay
    fixed. A trial point on which ``fun_grad`` raises ``NonPositiveDepth`` is
    treated as having infinite energy.
    """
    x = np.array(x0, dtype=np.float64)
    mask = None if free is None else np.broadcast_to(np.asarray(free, dtype=bool), x.shape)

    def masked(g):
        return g if mask is None else np.where(mask, g, 0.0)

    f, g = fun_grad(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise DivergedError("energy or gradient is not finite at the starting point")
    g = masked(g)
    f0 = f
    history = [f]
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    alpha = opts.initial_step / max(gnorm, 1.0)
    it = 0
    while gnorm >= opts.tol_g and it < opts.max_iters:
        gg = float(np.sum(g * g))
        for _ in range(opts.max_backtracks):
            x_new = x - alpha * g
            try:
                f_new, g_new = fun_grad(x_new)
            except NonPositiveDepth:
                f_new = np.inf
            if np.isfinite(f_new) and f_new <= f - opts.armijo_c * alpha * gg:
                break
            alpha *= opts.shrink
        else:
            break
        if not np.all(np.isfinite(g_new)):
            raise DivergedError(f"gradient became non-finite at iteration {it}")
        g_new = masked(g_new)
        s = x_new - x
        y = g_new - g
        sy = float(np.sum(s * y))
        alpha = float(np.sum(s * s)) / sy if sy > 0 else 2 * alpha
        alpha = min(max(alpha, 1e-12), 1e6)
        x, f, g = x_new, f_new, g_new
        history.append(f)
        gnorm = float(np.max(np.abs(g)))
        it += 1
    return DescentResult(x, f, f0, it, gnorm, gnorm < opts.tol_g, history)


@dataclass
class MinimizeResult:
    window: EstimationWindow
    energy: float
    initial_energy: float
    iterations: int
    grad_inf_norm: float
    converged: bool


def minimize(window: EstimationWindow, w: EnergyWeights, calib, k: Intrinsics,
             opts: MinimizeOptions = MinimizeOptions(), free_frames=None,
             topo: BoneTopology = DEFAULT_TOPOLOGY) -> MinimizeResult:
    """MAP poses of ``window``; only frames flagged in ``free_frames`` move."""
    problem = WindowProblem(window, w, calib, k, topo)
    free = None
    if free_frames is not None:
        free = np.zeros(window.poses.shape, dtype=bool)
        free[np.asarray(free_frames, dtype=bool)] = True
    res = gradient_descent(problem.energy_grad, window.poses, opts, free)
    return MinimizeResult(window.with_poses(res.x), res.energy, res.initial_energy, res.iterations,
                          res.grad_inf_norm, res.converged)


def initialize(first_detection: Detection2D, cam: CameraPose, k: Intrinsics,
               topo: BoneTopology = DEFAULT_TOPOLOGY, height: float = AVERAGE_HEIGHT) -> np.ndarray:
    """Back-project a 2D detection to the single depth giving the pose a stature of ``height``."""
    pixels = np.asarray(first_detection.joints2d, dtype=np.float64)
    unit = stature(back_project(pixels, cam, k, 1.0), topo)
    if unit < 1e-9:
        raise DegenerateDetection("back-projected skeleton has zero extent")
    # stature of a fixed-depth back-projection is linear in the depth
    return back_project(pixels, cam, k, height / unit)


@dataclass
class CalibrationResult:
    bone_lengths: np.ndarray
    residual: float
    pose: np.ndarray
    iterations: int = 0


CALIBRATION_OPTIONS = MinimizeOptions(tol_g=1e-8, max_iters=5000)


def _calibration_energy(theta, pixels, rotations, centers, k, omega_p, omega_sym, topo):
    theta = theta.reshape(NUM_JOINTS, 3)
    pc = np.einsum("nij,mj->nmi", rotations, theta) - np.einsum("nij,nj->ni", rotations, centers)[:, None, :]
    z = pc[..., 2]
    if z.min() <= 1e-3:
        raise NonPositiveDepth("calibration pose falls behind a camera")
    x, y = pc[..., 0], pc[..., 1]
    ru = k.fx * x / z + k.cx - pixels[..., 0]
    rv = k.fy * y / z + k.cy - pixels[..., 1]
    gp = np.stack([2 * omega_p * ru * k.fx / z, 2 * omega_p * rv * k.fy / z,
                   -2 * omega_p * (ru * k.fx * x + rv * k.fy * y) / z**2], axis=-1)
    grad = np.einsum("nji,nmj->mi", rotations, gp)
    energy = omega_p * float(np.sum(ru * ru + rv * rv))

    idx = topo.index
    u = theta[idx[:, 0]] - theta[idx[:, 1]]
    length = np.linalg.norm(u, axis=-1)
    unit = u / np.maximum(length, 1e-12)[:, None]
    for left, right in topo.mirror_pairs:
        diff = length[left] - length[right]
        energy += omega_sym * diff * diff
        for b, sign in ((left, 1.0), (right, -1.0)):
            dl = 2 * omega_sym * diff * sign * unit[b]
            grad[idx[b, 0]] += dl
            grad[idx[b, 1]] -= dl
    return energy, grad.ravel()


def calibrate(frames, k: Intrinsics, w: EnergyWeights = EnergyWeights.reconstruction(),
              topo: BoneTopology = DEFAULT_TOPOLOGY, opts: MinimizeOptions = CALIBRATION_OPTIONS,
              omega_sym: Optional[float] = None) -> CalibrationResult:
    """Recover bone lengths of a subject standing still in front of moving cameras.

    ``frames`` is a sequence of ``(Detection2D, CameraPose)``. One static pose
    is fitted to every 2D detection at once, with a penalty on left/right bone
    length differences weighted by ``omega_sym`` (defaults to ``w.omega_b``).
    """
    frames = list(frames)
    positions = np.array([cam.position for _, cam in frames]).reshape(-1, 3)
    distinct = len(np.unique(np.round(positions, 6), axis=0)) if len(frames) else 0
    if distinct < 2:
        raise InsufficientViews(f"calibration needs at least 2 distinct camera poses, got {distinct}")
    pixels = np.stack([np.asarray(det.joints2d, dtype=np.float64) for det, _ in frames])
    rotations = np.stack([cam.rotation for _, cam in frames])
    centers = positions
    det0, cam0 = frames[0]
    theta0 = initialize(det0, cam0, k, topo)
    omega_sym = w.omega_b if omega_sym is None else omega_sym

    def fun_grad(x):
        return _calibration_energy(x, pixels, rotations, centers, k, w.omega_p, omega_sym, topo)

    res = gradient_descent(fun_grad, theta0.ravel(), opts)
    pose = res.x.reshape(NUM_JOINTS, 3)
    return CalibrationResult(compute_bone_lengths(pose, topo), res.energy, pose, res.iterations)


def reprojection_error(pose, det: Detection2D, cam: CameraPose, k: Intrinsics) -> float:
    """Mean pixel distance between a detection and the projected pose."""
    return float(np.mean(np.linalg.norm(project(pose, cam, k) - det.joints2d, axis=-1)))

