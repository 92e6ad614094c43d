"""Closed-loop experiments: estimate, forecast, pick the next view, move, repeat.

A run replays a motion sequence against a simulated camera. Every control
cycle measures the subject from the current view, re-optimizes the sliding
window, forecasts the next frames and lets a policy pick where the camera
goes. In ``teleport`` and ``fixed_cameras`` mode the camera jumps to the
chosen candidate; in ``flight`` mode a drone tracks the chosen velocity
command through ``ReferenceDynamics``.

Outputs are plain CSV files plus a ``key = value`` manifest that echoes the
full configuration, so a run can be reproduced from its output directory.
"""

import csv
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, kernels
from .errors import ExperimentError, NbvPoseError, ParseError
from .estimator import (
    EnergyWeights,
    EstimationWindow,
    Measurement,
    MinimizeOptions,
    calibrate,
    fit_lift_scale,
    initialize,
    minimize,
)
from .flight import (
    DroneKinematicState,
    FlightModelParams,
    ReferenceDynamics,
    fit_params,
    random_directions,
    record_flight_log,
)
from .geometry import Intrinsics, look_at
from .motion import make_sequence
from .planner import (
    CandidateView,
    baseline_policy,
    forecast_poses,
    generate_fixed_candidates,
    generate_flight_candidates,
    generate_ring_candidates,
    is_visible,
    score_candidates,
    select_best,
)
from .sensing import (
    STREAM_CALIB_2D,
    STREAM_FLIGHT_LOG,
    STREAM_POLICY,
    NoiseModel,
    detect_2d,
    detect_3d_relative,
    noise_rng,
)
from .skeleton import HIP, mpjpe

MODES = ("teleport", "fixed_cameras", "flight")
POLICIES = ("active", "random", "constant_rotation_cw", "constant_rotation_ccw", "constant_angle", "oracle")
WINDOW_DEFAULTS = {"teleport": (2, 1), "fixed_cameras": (2, 1), "flight": (6, 3)}
FOLLOW_ID = 9


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run. ``k_past``/``horizon`` of ``None`` take the mode default."""

    mode: str = "teleport"
    policy: str = "active"
    sequence: str = "walk"
    frames: int = 120
    rate: float = 5.0
    seed: int = 0
    sigma_2d: float = 3.0
    sigma_3d: float = 0.03
    scale_corruption: float = 1.0
    margin: float = 0.0
    fx: float = 500.0
    fy: float = 500.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480
    k_past: Optional[int] = None
    horizon: Optional[int] = None
    radius: float = 7.0
    ring_count: int = 18
    ring_height: float = 1.5
    altitude_min: float = 0.25
    altitude_max: float = 3.5
    start_azimuth: float = 0.0
    rotation_step: int = 1
    calibration_views: int = 18
    rec_omega_p: float = 1e-4
    rec_omega_s: float = 1.0
    rec_omega_l: float = 0.1
    rec_omega_b: float = 1.0
    dec_omega_p: float = 1e-3
    dec_omega_s: float = 1.0
    dec_omega_l: float = 0.1
    dec_omega_b: float = 1.0
    tol_g: float = 1e-6
    max_iters: int = 500
    lam_floor: float = 1e-6
    future_only: bool = False
    hessian_method: str = "analytic"
    use_flight_model: bool = True
    uniform_step: float = 0.5
    beta: float = 0.7
    v_max: float = 5.0
    flight_log_steps: int = 60
    rollout_all: bool = False
    oracle_metric: str = "middle"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.k_past is not None and self.k_past < 1:
            raise ValueError("k_past must be at least 1")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.frames < 2:
            raise ValueError("a run needs at least 2 frames")
        if not self.altitude_min < self.altitude_max:
            raise ValueError("altitude band is empty")
        if self.oracle_metric not in ("middle", "current"):
            raise ValueError("oracle_metric must be 'middle' or 'current'")
        self.intrinsics  # validates the camera parameters

    @property
    def window(self):
        k_default, h_default = WINDOW_DEFAULTS[self.mode]
        return (k_default if self.k_past is None else self.k_past,
                h_default if self.horizon is None else self.horizon)

    @property
    def reconstruction_weights(self):
        return EnergyWeights(self.rec_omega_p, self.rec_omega_s, self.rec_omega_l, self.rec_omega_b)

    @property
    def decision_weights(self):
        return EnergyWeights(self.dec_omega_p, self.dec_omega_s, self.dec_omega_l, self.dec_omega_b)

    @property
    def noise(self):
        return NoiseModel(self.sigma_2d, self.sigma_3d, self.seed, self.margin)

    @property
    def intrinsics(self):
        return Intrinsics(self.fx, self.fy, self.cx, self.cy, self.width, self.height)

    @property
    def band(self):
        return (self.altitude_min, self.altitude_max)


# ---------------------------------------------------------------------------
# key = value config files

def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text, default):
    text = text.strip()
    if text.lower() == "none":
        return None
    if isinstance(default, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int) or default is None:
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def config_to_text(cfg: ExperimentConfig) -> str:
    return "".join(f"{f.name} = {_format_value(getattr(cfg, f.name))}\n" for f in fields(cfg))


def parse_config(text, base: ExperimentConfig = ExperimentConfig(), source="<config>") -> ExperimentConfig:
    """Read ``key = value`` lines over ``base``. Blank lines and ``#`` comments are skipped."""
    defaults = {f.name: getattr(ExperimentConfig(), f.name) for f in fields(ExperimentConfig)}
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in defaults:
            raise ParseError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            updates[key] = _parse_value(value, defaults[key])
        except ValueError as exc:
            raise ParseError(f"{source}:{lineno}: {key}: {exc}") from None
    try:
        return replace(base, **updates)
    except ValueError as exc:
        raise ParseError(f"{source}: {exc}") from None


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(config_to_text(cfg), encoding="utf-8")


def load_config(path, base: ExperimentConfig = ExperimentConfig()) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    return parse_config(text, base, str(path))


# ---------------------------------------------------------------------------
# results

@dataclass
class FrameRecord:
    frame: int
    step: int
    candidate_id: int
    label: str
    score: float
    mpjpe_middle: float
    mpjpe_current: float
    camera_position: np.ndarray
    camera_axis: np.ndarray


@dataclass
class CandidateRecord:
    frame: int
    candidate_id: int
    azimuth: float
    elevation: float
    score: float
    realized_middle: float
    realized_current: float
    chosen: bool


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list
    candidates: list = field(default_factory=list)
    calibration: Optional[np.ndarray] = None
    flight_params: Optional[FlightModelParams] = None
    timing: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.mpjpe_middle for r in self.records])

    @property
    def mean_mpjpe(self) -> float:
        return float(np.mean(self.errors))

    @property
    def current_errors(self) -> np.ndarray:
        return np.array([r.mpjpe_current for r in self.records])


@dataclass
class _Step:
    """Outcome of estimating one frame from one view."""

    estimates: dict
    window: EstimationWindow
    middle_error: float
    current_error: float


@dataclass
class _Camera:
    """Where the camera is during a frame, plus the drone state in flight mode."""

    candidate: CandidateView
    drone: Optional[DroneKinematicState] = None

    @property
    def pose(self):
        return self.candidate.cameras[0]


def _fmt(v) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# the run

class _Runner:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.k = cfg.intrinsics
        self.noise = cfg.noise
        self.k_past, self.horizon = cfg.window
        self.w_rec = cfg.reconstruction_weights
        self.w_dec = cfg.decision_weights
        self.opts = MinimizeOptions(tol_g=cfg.tol_g, max_iters=cfg.max_iters)
        self.seq = make_sequence(cfg.sequence, cfg.frames, cfg.rate)
        self.truth = self.seq.frames
        self.dynamics = ReferenceDynamics(cfg.beta, 1.0 / cfg.rate, cfg.v_max)
        self.flight_params = None
        self.calib = None
        self.fixed_cameras = None

    # -- setup ------------------------------------------------------------

    def calibrate(self):
        """Bone lengths from ring views of the first frame."""
        cfg = self.cfg
        hip = self.truth[0][HIP]
        ring = generate_ring_candidates(hip, cfg.radius, cfg.calibration_views, cfg.ring_height)
        frames = []
        for cand in ring:
            det = detect_2d(self.truth[0], cand.cameras[0], self.k, self.noise, frame=0,
                            candidate=cand.id, stream=STREAM_CALIB_2D)
            frames.append((det, cand.cameras[0]))
        self.calib = calibrate(frames, self.k, self.w_rec).bone_lengths
        return self.calib

    def fit_flight_model(self):
        cfg = self.cfg
        rng = noise_rng(cfg.seed, STREAM_FLIGHT_LOG)
        directions = random_directions(rng, cfg.flight_log_steps)
        log = record_flight_log(self.dynamics, directions, (0.0, 0.0, cfg.ring_height))
        self.flight_params = fit_params(log, self.dynamics.dt)
        return self.flight_params

    def initial_camera(self) -> _Camera:
        cfg = self.cfg
        hip = self.truth[0][HIP]
        if cfg.mode == "fixed_cameras":
            cands = generate_fixed_candidates(self.fixed_layout(), hip)
            return _Camera(baseline_policy("constant_angle", cands, bearing=cfg.start_azimuth))
        if cfg.mode == "flight":
            az = np.radians(cfg.start_azimuth)
            pos = np.array([hip[0] + cfg.radius * np.cos(az), hip[1] + cfg.radius * np.sin(az), cfg.ring_height])
            cam = look_at(pos, hip)
            return _Camera(CandidateView(0, (cam,), "start", cfg.start_azimuth, 0.0, np.zeros(3)),
                           DroneKinematicState(pos))
        ring = generate_ring_candidates(hip, cfg.radius, cfg.ring_count, cfg.ring_height)
        return _Camera(baseline_policy("constant_angle", ring, bearing=cfg.start_azimuth))

    def fixed_layout(self):
        """Fourteen static cameras on two rings around the sequence's mean hip."""
        if self.fixed_cameras is None:
            center = self.truth[:, HIP].mean(axis=0)
            cams = []
            for i, (count, height, offset) in enumerate(((7, 1.0, 0.0), (7, 3.0, np.pi / 7))):
                for j in range(count):
                    a = offset + 2 * np.pi * j / count
                    pos = center + np.array([self.cfg.radius * np.cos(a), self.cfg.radius * np.sin(a), 0.0])
                    pos[2] = height
                    cams.append(look_at(pos, center))
            self.fixed_cameras = cams
        return self.fixed_cameras

    # -- estimation -------------------------------------------------------

    def measure(self, t, camera: _Camera) -> Measurement:
        cid = camera.candidate.id
        det2d = detect_2d(self.truth[t], camera.pose, self.k, self.noise, frame=t, candidate=cid)
        det3d = detect_3d_relative(self.truth[t], camera.pose, self.noise, self.cfg.scale_corruption,
                                   frame=t, candidate=cid)
        return Measurement(det2d, det3d, camera.pose)

    def estimate(self, t, meas: Measurement, estimates: dict, measurements: dict) -> _Step:
        """Add frame ``t`` observed through ``meas`` and re-optimize the window ending at it."""
        first = max(0, t - self.k_past)
        frames = list(range(first, t + 1))
        if t == 0:
            current = initialize(meas.detection2d, meas.camera, self.k)
        elif t >= 2:
            current = 2 * estimates[t - 1] - estimates[t - 2]
        else:
            current = estimates[t - 1]
        poses = [estimates[f] for f in frames[:-1]] + [current]
        meas_list = [measurements[f] for f in frames[:-1]] + [meas]
        scale = fit_lift_scale(meas.detection3d, self.calib)
        window = EstimationWindow(np.array(poses), meas_list, self.k_past, 0, scale, frames)
        window = minimize(window, self.w_rec, self.calib, self.k, self.opts).window
        updated = dict(estimates)
        for f, pose in zip(frames, window.poses):
            updated[f] = pose
        mid = frames[window.middle]
        return _Step(updated, window, mpjpe(window.poses[window.middle], self.truth[mid]),
                     mpjpe(window.poses[-1], self.truth[t]))

    # -- candidates -------------------------------------------------------

    def candidates(self, forecast: EstimationWindow, camera: _Camera):
        cfg = self.cfg
        future = forecast.poses[len(forecast) - forecast.horizon:]
        targets = [p[HIP] for p in future]
        if cfg.mode == "teleport":
            return generate_ring_candidates(targets[0], cfg.radius, cfg.ring_count, cfg.ring_height, targets)
        if cfg.mode == "fixed_cameras":
            return generate_fixed_candidates(self.fixed_layout(), targets[0], len(targets))
        drone = camera.drone
        return generate_flight_candidates(drone, self.flight_params, targets, cfg.radius, cfg.band,
                                          cfg.use_flight_model, cfg.uniform_step, cfg.v_max)

    def follow_candidate(self, forecast: EstimationWindow, camera: _Camera) -> CandidateView:
        """Flight-mode constant angle: head for the start bearing on the sphere around the subject."""
        cfg = self.cfg
        hip = forecast.poses[len(forecast) - forecast.horizon][HIP]
        az = np.radians(cfg.start_azimuth)
        goal = hip + cfg.radius * np.array([np.cos(az), np.sin(az), 0.0])
        goal[2] = cfg.ring_height
        step = (goal - camera.drone.position) / (cfg.v_max * self.dynamics.dt)
        norm = np.linalg.norm(step)
        if norm > 1.0:
            step = step / norm
        cam = look_at(goal, hip)
        return CandidateView(FOLLOW_ID, (cam,), "follow", cfg.start_azimuth, 0.0, step)

    def move(self, camera: _Camera, chosen: CandidateView, target) -> _Camera:
        """Camera for the next frame after committing to ``chosen``."""
        if self.cfg.mode != "flight":
            return _Camera(chosen)
        drone = camera.drone
        direction = np.zeros(3) if chosen.direction is None else np.asarray(chosen.direction)
        pos, vel = self.dynamics.step(drone.position, drone.velocity, self.cfg.v_max * direction)
        # ground and ceiling: the drone stops vertically at the band edges
        z = float(np.clip(pos[2], *self.cfg.band))
        if z != pos[2]:
            pos = np.array([pos[0], pos[1], z])
            vel = np.array([vel[0], vel[1], 0.0])
        p = self.flight_params
        a_prev = p.alpha * p.a_input_magnitude * direction + (1 - p.alpha) * drone.a_previous
        cam = look_at(pos, target)
        moved = CandidateView(chosen.id, (cam,), chosen.label, chosen.azimuth, chosen.elevation, direction)
        return _Camera(moved, DroneKinematicState(pos, vel, a_prev))

    # -- policy -----------------------------------------------------------

    def decide(self, t, step: _Step, camera: _Camera, measurements, rotation_prev):
        """Choose the camera for frame ``t + 1``; returns (camera, score, candidate rows, rollout)."""
        cfg = self.cfg
        forecast = forecast_poses(step.window, self.horizon, self.calib, self.w_dec, self.opts)
        target = forecast.poses[len(forecast) - forecast.horizon][HIP]
        future = forecast.poses[len(forecast) - forecast.horizon:]
        cands = [c for c in self.candidates(forecast, camera) if is_visible(c, future, self.k, cfg.margin)]
        policy = cfg.policy
        if policy == "active" and t < self.k_past:
            policy = "constant_rotation_ccw"

        scores = {}
        if policy == "active" or cfg.rollout_all:
            for c in score_candidates(forecast, cands, self.w_dec, self.calib, self.k, cfg.lam_floor,
                                      cfg.future_only, cfg.margin, cfg.hessian_method):
                scores[c.id] = c.uncertainty

        rollouts = {}
        if policy == "oracle" or cfg.rollout_all:
            for c in cands:
                nxt = self.move(camera, c, target)
                try:
                    meas = self.measure(t + 1, nxt)
                except NbvPoseError:
                    continue
                rollouts[c.id] = (nxt, meas, self.estimate(t + 1, meas, step.estimates, measurements))

        if policy == "active":
            chosen = select_best([replace(c, uncertainty=scores[c.id]) for c in cands if c.id in scores])
        elif policy == "random":
            chosen = baseline_policy("random", cands, rng=noise_rng(cfg.seed, STREAM_POLICY, t))
        elif policy.startswith("constant_rotation"):
            inc = cfg.rotation_step if policy.endswith("_ccw") else -cfg.rotation_step
            chosen = baseline_policy("constant_rotation", cands, previous=rotation_prev, increment=inc)
        elif policy == "constant_angle":
            if cfg.mode == "flight":
                chosen = self.follow_candidate(forecast, camera)
            else:
                chosen = baseline_policy("constant_angle", cands, bearing=cfg.start_azimuth)
        else:
            realized = {cid: r[2].middle_error if cfg.oracle_metric == "middle" else r[2].current_error
                        for cid, r in rollouts.items()}
            chosen = baseline_policy("oracle", cands, realized=realized)

        rows = []
        if scores or rollouts:
            for c in cands:
                r = rollouts.get(c.id)
                rows.append(CandidateRecord(t + 1, c.id, c.azimuth, c.elevation, scores.get(c.id, np.nan),
                                            r[2].middle_error if r else np.nan,
                                            r[2].current_error if r else np.nan, c.id == chosen.id))
        rollout = rollouts.get(chosen.id)
        if rollout is not None and chosen.label == "follow":
            rollout = None
        return self.move(camera, chosen, target), scores.get(chosen.id, np.nan), rows, rollout, chosen

    # -- loop -------------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        timing = {}
        t0 = time.perf_counter()
        try:
            self.calibrate()
            if cfg.mode == "flight":
                self.fit_flight_model()
        except NbvPoseError as exc:
            raise ExperimentError(0, exc) from exc
        timing["setup_s"] = time.perf_counter() - t0

        camera = self.initial_camera()
        estimates, measurements = {}, {}
        records, cand_rows = [], []
        score = np.nan
        rollout = None
        rotation_prev = camera.candidate.id
        t1 = time.perf_counter()
        for t in range(len(self.truth)):
            try:
                if rollout is not None:
                    camera, meas, step = rollout
                else:
                    meas = self.measure(t, camera)
                    step = self.estimate(t, meas, estimates, measurements)
                measurements[t] = meas
                estimates = step.estimates
                if t >= self.k_past:
                    pose = camera.pose
                    records.append(FrameRecord(step.window.frames[step.window.middle], t, camera.candidate.id,
                                               camera.candidate.label, score, step.middle_error,
                                               step.current_error, pose.position.copy(),
                                               pose.optical_axis.copy()))
                if t + 1 == len(self.truth):
                    break
                camera, score, rows, rollout, chosen = self.decide(t, step, camera, measurements, rotation_prev)
                rotation_prev = chosen.id
                cand_rows.extend(rows)
            except NbvPoseError as exc:
                raise ExperimentError(t, exc) from exc
        timing["loop_s"] = time.perf_counter() - t1
        timing["total_s"] = time.perf_counter() - t0
        return RunResult(cfg, records, cand_rows, self.calib, self.flight_params, timing)


def run_experiment(config: ExperimentConfig) -> RunResult:
    """Run one closed-loop experiment; module errors abort with the frame index."""
    return _Runner(config).run()


def run_calibration(config: ExperimentConfig) -> np.ndarray:
    try:
        return _Runner(config).calibrate()
    except NbvPoseError as exc:
        raise ExperimentError(0, exc) from exc


# ---------------------------------------------------------------------------
# export

FRAME_HEADER = ("frame", "step", "candidate_id", "label", "score", "mpjpe_middle", "mpjpe_current",
                "cam_x", "cam_y", "cam_z", "axis_x", "axis_y", "axis_z")
CANDIDATE_HEADER = ("frame", "candidate_id", "azimuth", "elevation", "score", "realized_middle",
                    "realized_current", "chosen")
SUMMARY_HEADER = ("policy", "mode", "sequence", "runs", "mean_mpjpe", "std_mpjpe")


@dataclass(frozen=True)
class SummaryRow:
    policy: str
    mode: str
    sequence: str
    runs: int
    mean_mpjpe: float
    std_mpjpe: float


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _open(path):
    try:
        return Path(path).open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror}") from exc


def write_frames_csv(result: RunResult, path) -> None:
    with _open(path) as fh:
        w = _writer(fh)
        w.writerow(FRAME_HEADER)
        for r in result.records:
            w.writerow([r.frame, r.step, r.candidate_id, r.label, _fmt(r.score), _fmt(r.mpjpe_middle),
                        _fmt(r.mpjpe_current), *map(_fmt, r.camera_position), *map(_fmt, r.camera_axis)])


def write_candidates_csv(rows, path) -> None:
    with _open(path) as fh:
        w = _writer(fh)
        w.writerow(CANDIDATE_HEADER)
        for r in rows:
            w.writerow([r.frame, r.candidate_id, _fmt(r.azimuth), _fmt(r.elevation), _fmt(r.score),
                        _fmt(r.realized_middle), _fmt(r.realized_current), int(r.chosen)])


def write_summary_csv(rows, path) -> None:
    with _open(path) as fh:
        w = _writer(fh)
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([r.policy, r.mode, r.sequence, r.runs, _fmt(r.mean_mpjpe), _fmt(r.std_mpjpe)])


def read_summary_csv(path) -> list:
    path = Path(path)
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != SUMMARY_HEADER:
            raise ParseError(f"{path}: expected header {','.join(SUMMARY_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(SUMMARY_HEADER):
                raise ParseError(f"{path}:{lineno}: expected {len(SUMMARY_HEADER)} columns")
            try:
                rows.append(SummaryRow(row[0], row[1], row[2], int(row[3]), float(row[4]), float(row[5])))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return rows


def write_manifest(config: ExperimentConfig, path, extra=None) -> None:
    lines = [f"# nbvpose {__version__}, kernels: {kernels.BACKEND}\n", config_to_text(config)]
    for key, value in (extra or {}).items():
        lines.append(f"# {key} = {value}\n")
    with _open(path) as fh:
        fh.write("".join(lines))


def summarize(results, label=None) -> SummaryRow:
    """Mean and (population) standard deviation of per-run mean mpjpe."""
    means = np.array([r.mean_mpjpe for r in results])
    cfg = results[0].config
    return SummaryRow(label or cfg.policy, cfg.mode, cfg.sequence, len(results),
                      float(np.mean(means)), float(np.std(means)))


def export(result: RunResult, out_dir) -> dict:
    """Write frames.csv, summary.csv, candidates.csv (when scored), manifest.txt and timing.txt."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"frames": out / "frames.csv", "summary": out / "summary.csv", "manifest": out / "manifest.txt"}
    write_frames_csv(result, paths["frames"])
    write_summary_csv([summarize([result])], paths["summary"])
    if result.candidates:
        paths["candidates"] = out / "candidates.csv"
        write_candidates_csv(result.candidates, paths["candidates"])
    extra = {}
    if result.flight_params is not None:
        p = result.flight_params
        extra = {"fitted_alpha": repr(p.alpha), "fitted_a_input_magnitude": repr(p.a_input_magnitude)}
    write_manifest(result.config, paths["manifest"], extra)
    # wall-clock numbers vary between runs, so they stay out of the CSVs
    paths["timing"] = out / "timing.txt"
    with _open(paths["timing"]) as fh:
        fh.write("".join(f"{k} = {v:.3f}\n" for k, v in result.timing.items()))
    return paths


@dataclass
class SweepResult:
    summary: list
    runs: dict

    def row(self, label) -> SummaryRow:
        return next(r for r in self.summary if r.policy == label)


def sweep(base: ExperimentConfig, policies, seeds, out_dir=None, variants=None) -> SweepResult:
    """Run every policy (or named config variant) for every seed.

    ``variants`` maps labels to field overrides and replaces ``policies``
    when given. With ``out_dir`` each run is exported to ``<label>/seed<n>``
    and the summary goes to ``summary.csv``.
    """
    if variants is None:
        variants = {p: {"policy": p} for p in policies}
    runs, summary = {}, []
    for label, overrides in variants.items():
        results = []
        for seed in seeds:
            result = run_experiment(replace(base, seed=int(seed), **overrides))
            results.append(result)
            if out_dir is not None:
                export(result, Path(out_dir) / label / f"seed{seed}")
        runs[label] = results
        summary.append(summarize(results, label))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_summary_csv(summary, Path(out_dir) / "summary.csv")
        write_manifest(base, Path(out_dir) / "manifest.txt",
                       {"variants": ";".join(variants), "seeds": ",".join(map(str, seeds))})
    return SweepResult(summary, runs)
