"""Next-best-view selection from the curvature of the window energy.

Around its minimum the posterior ``exp(-E)`` is approximated by a Gaussian
whose covariance is the inverse Hessian of ``E``. A candidate camera is scored
by the trace of that covariance after adding the measurements the candidate
would produce of the forecast poses; the lowest score wins.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import NonPositiveDepth, NoVisibleCandidate, NumericalFailure, SubjectNotVisible
from .estimator import (
    EnergyWeights,
    EstimationWindow,
    Measurement,
    MinimizeOptions,
    WindowProblem,
    gradient_descent,
)
from .flight import DroneKinematicState, FlightModelParams, predict_trajectory, uniform_trajectory
from .geometry import WORLD_UP, Intrinsics, in_image, look_at, project
from .sensing import Detection2D, Detection3D
from .skeleton import DEFAULT_TOPOLOGY, HIP, BoneTopology

LAMBDA_FLOOR = 1e-6
FD_STEP = 1e-4

FLIGHT_DIRECTIONS = {
    "center": (0.0, 0.0),
    "up": (0.0, 1.0),
    "down": (0.0, -1.0),
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "up-left": (-1.0, 1.0),
    "up-right": (1.0, 1.0),
    "down-left": (-1.0, -1.0),
    "down-right": (1.0, -1.0),
}


@dataclass(frozen=True, eq=False)
class CandidateView:
    """A hypothetical camera placement for each of the next ``horizon`` frames."""

    id: int
    cameras: tuple
    label: str = ""
    azimuth: float = 0.0
    elevation: float = 0.0
    direction: Optional[np.ndarray] = None
    uncertainty: Optional[float] = None

    @property
    def positions(self) -> np.ndarray:
        return np.array([c.position for c in self.cameras])


@dataclass(frozen=True, eq=False)
class UncertaintyReport:
    hessian: np.ndarray
    eigenvalues: np.ndarray
    score: float


def _bearing(position, center):
    d = np.asarray(position, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    azimuth = np.degrees(np.arctan2(d[1], d[0])) % 360.0
    elevation = np.degrees(np.arctan2(d[2], np.hypot(d[0], d[1])))
    return float(azimuth), float(elevation)


# ---------------------------------------------------------------------------
# Laplace approximation

def numerical_hessian(grad_fn, x, step=FD_STEP) -> np.ndarray:
    """Central differences of an analytic gradient, symmetrized."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel()
    n = flat.size
    H = np.empty((n, n))
    for i in range(n):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += step
        xm[i] -= step
        H[:, i] = (np.ravel(grad_fn(xp.reshape(x.shape))) - np.ravel(grad_fn(xm.reshape(x.shape)))) / (2 * step)
    return 0.5 * (H + H.T)


def uncertainty_from_hessian(H, lam_floor=LAMBDA_FLOOR, restrict=None) -> UncertaintyReport:
    """Trace of the floored inverse Hessian.

    ``restrict`` is an optional boolean mask selecting the variables whose
    marginal variances are summed; by default every variable counts.
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("Hessian must be square")
    if not np.all(np.isfinite(H)):
        raise NumericalFailure("Hessian has non-finite entries")
    try:
        if restrict is None:
            lam = np.linalg.eigvalsh(H)
            score = float(np.sum(1.0 / np.maximum(lam, lam_floor)))
        else:
            lam, vec = np.linalg.eigh(H)
            weights = np.sum(vec[np.asarray(restrict, dtype=bool)] ** 2, axis=0)
            score = float(np.sum(weights / np.maximum(lam, lam_floor)))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigen-decomposition failed: {exc}") from None
    if not np.isfinite(score):
        raise NumericalFailure("uncertainty score is not finite")
    return UncertaintyReport(H, lam, score)


def hessian(window: EstimationWindow, w: EnergyWeights, calib, k: Intrinsics, method="analytic",
            lam_floor=LAMBDA_FLOOR, future_only=False, step=FD_STEP,
            topo: BoneTopology = DEFAULT_TOPOLOGY) -> UncertaintyReport:
    """Hessian of the window energy at the window's poses and its uncertainty score.

    ``method`` is ``"analytic"`` (closed-form second derivatives) or ``"fd"``
    (central differences of the analytic gradient).
    """
    problem = WindowProblem(window, w, calib, k, topo)
    if method == "analytic":
        H = problem.hessian(window.poses)
    elif method == "fd":
        H = numerical_hessian(lambda X: problem.energy_grad(X)[1], window.poses, step)
    else:
        raise ValueError(f"unknown Hessian method {method!r}")
    restrict = None
    if future_only:
        restrict = np.zeros(window.poses.shape, dtype=bool)
        restrict[len(window) - window.horizon:] = True
        restrict = restrict.ravel()
    return uncertainty_from_hessian(H, lam_floor, restrict)


# ---------------------------------------------------------------------------
# Forecasting

def _forecast_energy(x, fixed, horizon, omega_s, omega_b, bones, calib):
    """Constant-velocity prior plus bone term on the future frames only."""
    fut = x.reshape(horizon, *fixed.shape[1:])
    full = np.concatenate([fixed, fut])
    acc = full[2:] - 2 * full[1:-1] + full[:-2]
    acc = acc[-horizon:]
    energy = omega_s * float(np.sum(acc * acc))
    g_full = np.zeros_like(full)
    n = len(full)
    for i, a in zip(range(n - horizon, n), acc):
        g_full[i] += 2 * omega_s * a
        g_full[i - 1] -= 4 * omega_s * a
        g_full[i - 2] += 2 * omega_s * a
    u = fut[:, bones[:, 0]] - fut[:, bones[:, 1]]
    length = np.linalg.norm(u, axis=-1)
    dev = length - calib
    energy += omega_b * float(np.sum(dev * dev))
    coef = 2 * omega_b * dev / np.maximum(length, 1e-12)
    g = g_full[-horizon:]
    for b, (p, c) in enumerate(bones):
        g[:, p] += coef[:, b, None] * u[:, b]
        g[:, c] -= coef[:, b, None] * u[:, b]
    return energy, g.ravel()


def forecast_poses(window: EstimationWindow, horizon: int, calib, w: EnergyWeights = EnergyWeights.decision(),
                   opts: MinimizeOptions = MinimizeOptions(), topo: BoneTopology = DEFAULT_TOPOLOGY,
                   refine=True) -> EstimationWindow:
    """Append ``horizon`` future frames continuing the window's motion.

    Future poses start from constant per-joint velocity extrapolation and are
    refined under a constant-velocity prior and the bone-length term; past
    frames stay fixed. A window with one estimated frame is held static.
    """
    past = window.poses[: len(window) - window.horizon]
    if len(past) < 1:
        raise ValueError("forecasting needs at least one estimated frame")
    # a single estimated frame is treated as standing still
    velocity = past[-1] - past[-2] if len(past) > 1 else np.zeros_like(past[-1])
    future = past[-1] + np.arange(1, horizon + 1)[:, None, None] * velocity
    if refine and horizon and len(past) > 1:
        res = gradient_descent(
            lambda x: _forecast_energy(x, past[-2:], horizon, w.omega_s, w.omega_b, topo.index,
                                       np.asarray(calib, dtype=np.float64)),
            future.ravel(), opts)
        future = res.x.reshape(future.shape)
    measurements = list(window.measurements[: len(past)]) + [None] * horizon
    frames = None
    if window.frames is not None:
        last = list(window.frames)[len(past) - 1]
        frames = list(window.frames)[: len(past)] + [last + i for i in range(1, horizon + 1)]
    return replace(window, poses=np.concatenate([past, future]), measurements=measurements,
                   horizon=horizon, frames=frames)


def forecast_measurements(forecast, candidate: CandidateView, k: Intrinsics, lift_scale=1.0,
                          margin=0.0) -> list:
    """Noise-free detections of each forecast pose from the candidate's cameras."""
    forecast = np.asarray(forecast, dtype=np.float64).reshape(-1, *np.shape(forecast)[-2:])
    out = []
    for i, (pose, cam) in enumerate(zip(forecast, candidate.cameras)):
        try:
            pixels = project(pose, cam, k)
        except NonPositiveDepth:
            raise SubjectNotVisible(f"candidate {candidate.id} has the subject behind it") from None
        if not in_image(pixels, k, margin):
            raise SubjectNotVisible(f"candidate {candidate.id} loses the subject at future step {i + 1}")
        rel = cam.to_camera(pose) - cam.to_camera(pose[HIP])
        out.append(Measurement(Detection2D(pixels, i), Detection3D(rel / lift_scale, i), cam))
    return out


def with_future_measurements(window: EstimationWindow, measurements) -> EstimationWindow:
    n_past = len(window) - window.horizon
    return replace(window, measurements=list(window.measurements[:n_past]) + list(measurements))


# ---------------------------------------------------------------------------
# Scoring and selection

def is_visible(candidate: CandidateView, forecast, k: Intrinsics, margin=0.0) -> bool:
    try:
        forecast_measurements(forecast, candidate, k, 1.0, margin)
    except SubjectNotVisible:
        return False
    return True


def score_candidates(window: EstimationWindow, candidates, w: EnergyWeights, calib, k: Intrinsics,
                     lam_floor=LAMBDA_FLOOR, future_only=False, margin=0.0, method="analytic",
                     topo: BoneTopology = DEFAULT_TOPOLOGY) -> list:
    """Score every visible candidate; invisible ones are dropped.

    ``window`` must already hold its forecast future frames.
    """
    forecast = window.poses[len(window) - window.horizon:]
    scored = []
    for cand in candidates:
        try:
            meas = forecast_measurements(forecast, cand, k, window.lift_scale, margin)
        except SubjectNotVisible:
            continue
        report = hessian(with_future_measurements(window, meas), w, calib, k, method=method,
                         lam_floor=lam_floor, future_only=future_only, topo=topo)
        scored.append(replace(cand, uncertainty=report.score))
    if not scored:
        raise NoVisibleCandidate("no candidate keeps the forecast subject in view")
    return scored


def select_best(candidates) -> CandidateView:
    """Lowest uncertainty; ties go to the lowest id."""
    candidates = list(candidates)
    if not candidates:
        raise NoVisibleCandidate("empty candidate set")
    return min(candidates, key=lambda c: (c.uncertainty, c.id))


# ---------------------------------------------------------------------------
# Candidate generators

def _targets(subject_center, targets, steps):
    if targets is None:
        return [np.asarray(subject_center, dtype=np.float64)] * steps
    return [np.asarray(t, dtype=np.float64) for t in targets]


def generate_ring_candidates(subject_center, radius=7.0, count=18, height=None, targets=None,
                             plane="horizontal", start_angle=0.0) -> list:
    """Cameras equally spaced on a circle around ``subject_center``.

    ``plane="horizontal"`` puts the ring at altitude ``height`` (defaults to
    the center's); ``plane="vertical"`` puts it in the x-z plane through the
    center, passing overhead. ``targets`` optionally gives one look-at point
    per future step.
    """
    center = np.asarray(subject_center, dtype=np.float64)
    steps = 1 if targets is None else len(targets)
    looks = _targets(center, targets, steps)
    out = []
    for i in range(count):
        angle = start_angle + 2 * np.pi * i / count
        if plane == "horizontal":
            z = center[2] if height is None else height
            pos = np.array([center[0] + radius * np.cos(angle), center[1] + radius * np.sin(angle), z])
            up = WORLD_UP
        elif plane == "vertical":
            pos = center + radius * np.array([np.cos(angle), 0.0, np.sin(angle)])
            up = np.array([0.0, 1.0, 0.0])
        else:
            raise ValueError(f"unknown ring plane {plane!r}")
        cams = tuple(look_at(pos, t, up) for t in looks)
        az, el = _bearing(pos, center)
        out.append(CandidateView(i, cams, f"ring-{i:02d}", az, el))
    return out


def generate_fixed_candidates(cameras, subject_center=(0.0, 0.0, 1.0), steps=1) -> list:
    """One candidate per fixed camera, held for ``steps`` future frames."""
    out = []
    for i, cam in enumerate(cameras):
        az, el = _bearing(cam.position, subject_center)
        out.append(CandidateView(i, (cam,) * steps, f"fixed-{i:02d}", az, el))
    return out


def flight_direction(position, subject, label, radius=7.0, band=(0.25, 3.5), step_length=1.0) -> np.ndarray:
    """Unit command for one of the nine flight candidates.

    The raw direction (left/right tangential, up/down vertical) is applied for
    ``step_length`` meters, the goal is pulled back onto the sphere of
    ``radius`` around ``subject`` and clamped to the altitude band; the
    command points at that goal. ``"center"`` is the zero command.
    """
    a, b = FLIGHT_DIRECTIONS[label]
    if a == 0.0 and b == 0.0:
        return np.zeros(3)
    position = np.asarray(position, dtype=np.float64)
    subject = np.asarray(subject, dtype=np.float64)
    forward = subject - position
    forward[2] = 0.0
    if np.linalg.norm(forward) < 1e-9:
        forward = np.array([1.0, 0.0, 0.0])
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, WORLD_UP)
    raw = a * right + b * WORLD_UP
    raw /= np.linalg.norm(raw)
    goal = position + step_length * raw
    offset = goal - subject
    goal = subject + radius * offset / max(np.linalg.norm(offset), 1e-9)
    goal[2] = np.clip(goal[2], *band)
    d = goal - position
    norm = np.linalg.norm(d)
    return d / norm if norm > 1e-9 else np.zeros(3)


def generate_flight_candidates(state: DroneKinematicState, params: FlightModelParams, targets,
                               radius=7.0, band=(0.25, 3.5), use_flight_model=True,
                               uniform_step=0.5, v_max=5.0) -> list:
    """Nine candidate trajectories, one predicted position per forecast frame.

    ``targets`` are the forecast hip positions of the next frames; their count
    sets the horizon. Without the flight model, positions are spaced
    ``uniform_step`` apart along the command, ignoring momentum.
    """
    targets = [np.asarray(t, dtype=np.float64) for t in targets]
    steps = len(targets)
    out = []
    for i, label in enumerate(FLIGHT_DIRECTIONS):
        direction = flight_direction(state.position, targets[0], label, radius, band, v_max * params.dt)
        if use_flight_model:
            path = predict_trajectory(state, direction, params, steps, v_max)
        else:
            path = uniform_trajectory(state.position, direction, uniform_step, steps)
        path[:, 2] = np.clip(path[:, 2], *band)
        cams = tuple(look_at(p, t) for p, t in zip(path, targets))
        az, el = _bearing(path[0], targets[0])
        out.append(CandidateView(i, cams, label, az, el, direction))
    return out


# ---------------------------------------------------------------------------
# Baselines

def _angle_diff(a, b):
    return abs((a - b + 180.0) % 360.0 - 180.0)


def baseline_policy(kind, candidates, *, rng=None, previous=None, increment=1, bearing=None,
                    realized=None) -> CandidateView:
    """Choose a candidate with a predefined policy.

    ``random``              uniform draw from ``rng``
    ``constant_rotation``   ring: ``increment`` slots past ``previous`` (an
                            id); flight: the ``"right"`` candidate for a
                            positive increment, ``"left"`` otherwise
    ``constant_angle``      candidate whose azimuth is closest to ``bearing``
    ``oracle``              lowest entry of ``realized`` (id -> error)
    """
    candidates = list(candidates)
    if not candidates:
        raise NoVisibleCandidate("no candidate available")
    by_id = {c.id: c for c in candidates}
    if kind == "random":
        return candidates[int(rng.integers(len(candidates)))]
    if kind == "constant_rotation":
        labels = {c.label: c for c in candidates}
        if "right" in labels or "left" in labels:
            want = "right" if increment > 0 else "left"
            if want in labels:
                return labels[want]
            return min(candidates, key=lambda c: c.id)
        count = max(c.id for c in candidates) + 1
        start = 0 if previous is None else previous + increment
        step = 1 if increment >= 0 else -1
        for j in range(count):
            cid = (start + step * j) % count
            if cid in by_id:
                return by_id[cid]
        raise NoVisibleCandidate("constant rotation found no visible slot")
    if kind == "constant_angle":
        return min(candidates, key=lambda c: (_angle_diff(c.azimuth, bearing), c.id))
    if kind == "oracle":
        visible = [c for c in candidates if c.id in realized]
        if not visible:
            raise NoVisibleCandidate("oracle has no rolled-out candidate")
        return min(visible, key=lambda c: (realized[c.id], c.id))
    raise ValueError(f"unknown baseline policy {kind!r}")

