"""Drone flight: the constant-acceleration prediction model and reference dynamics.

The prediction model assumes constant acceleration over a control period
``dt``. The acceleration applied during a period blends the commanded input
(fixed magnitude along the candidate direction) with the previous period's
acceleration::

    a = alpha * a_input + (1 - alpha) * a_previous
    x' = x + v * dt + 0.5 * a * dt**2
    v' = clamp(v + a * dt, v_max)

``ReferenceDynamics`` is the stand-in for the simulator's physics that the
model is fitted against: the velocity tracks the commanded velocity with
exponential smoothing.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DegenerateLog, ParseError

V_MAX = 5.0
DT = 0.2
FLIGHT_LOG_HEADER = ("step", "cmd_x", "cmd_y", "cmd_z", "pos_x", "pos_y", "pos_z")


def _vec(v):
    out = np.array(v, dtype=np.float64).reshape(3)
    out.setflags(write=False)
    return out


def clamp_speed(velocity, v_max=V_MAX):
    speed = float(np.linalg.norm(velocity))
    if speed > v_max:
        return velocity * (v_max / speed)
    return velocity


@dataclass(frozen=True, eq=False)
class DroneKinematicState:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    a_previous: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "position", _vec(self.position))
        object.__setattr__(self, "velocity", _vec(clamp_speed(np.asarray(self.velocity, dtype=np.float64))))
        object.__setattr__(self, "a_previous", _vec(self.a_previous))


@dataclass(frozen=True)
class FlightModelParams:
    dt: float = DT
    alpha: float = 0.5
    a_input_magnitude: float = 10.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


def predict_step(state: DroneKinematicState, direction, params: FlightModelParams,
                 v_max=V_MAX) -> DroneKinematicState:
    direction = np.asarray(direction, dtype=np.float64)
    a_input = params.a_input_magnitude * direction
    a_current = params.alpha * a_input + (1.0 - params.alpha) * state.a_previous
    position = state.position + state.velocity * params.dt + 0.5 * a_current * params.dt**2
    velocity = clamp_speed(state.velocity + a_current * params.dt, v_max)
    return DroneKinematicState(position, velocity, a_current)


def predict_trajectory(state: DroneKinematicState, direction, params: FlightModelParams, steps=3,
                       v_max=V_MAX) -> np.ndarray:
    """Positions after each of the next ``steps`` periods, shape ``(steps, 3)``."""
    out = []
    for _ in range(steps):
        state = predict_step(state, direction, params, v_max)
        out.append(state.position)
    return np.array(out).reshape(steps, 3)


def uniform_trajectory(position, direction, step_length=0.5, steps=3) -> np.ndarray:
    """Momentum-free stand-in: equally spaced points along ``direction``."""
    position = np.asarray(position, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    return position + step_length * np.arange(1, steps + 1)[:, None] * direction


@dataclass(frozen=True)
class ReferenceDynamics:
    """Velocity-command tracking ``v' = beta * v + (1 - beta) * v_cmd``."""

    beta: float = 0.7
    dt: float = DT
    v_max: float = V_MAX

    def step(self, position, velocity, v_cmd):
        v_cmd = clamp_speed(np.asarray(v_cmd, dtype=np.float64), self.v_max)
        velocity = np.asarray(velocity, dtype=np.float64)
        v_new = self.beta * velocity + (1.0 - self.beta) * v_cmd
        position = np.asarray(position, dtype=np.float64) + 0.5 * (velocity + v_new) * self.dt
        return position, v_new


def _blended_inputs(commands, alpha):
    """Unit-magnitude acceleration recursion ``s_t = alpha d_t + (1 - alpha) s_{t-1}``."""
    s = np.zeros_like(commands)
    prev = np.zeros(3)
    for t, d in enumerate(commands):
        prev = alpha * d + (1.0 - alpha) * prev
        s[t] = prev
    return s


def _fit_magnitude(commands, positions, alpha, dt):
    """Closed-form input magnitude and squared residual for a fixed ``alpha``.

    The log starts from hover (zero velocity and acceleration). With the
    model's own velocity update, the second difference of positions equals
    ``0.5 * A * dt**2 * (s_{t-1} + s_t)``, linear in the magnitude ``A``.
    """
    s = _blended_inputs(commands, alpha)
    target = np.empty((len(positions) - 1, 3))
    basis = np.empty_like(target)
    target[0] = positions[1] - positions[0]
    basis[0] = 0.5 * dt**2 * s[0]
    target[1:] = positions[2:] - 2 * positions[1:-1] + positions[:-2]
    basis[1:] = 0.5 * dt**2 * (s[:-1][: len(target) - 1] + s[1: len(target)])
    denom = float(np.sum(basis * basis))
    if denom < 1e-18:
        return 0.0, float(np.sum(target * target))
    mag = float(np.sum(basis * target)) / denom
    return mag, float(np.sum((target - mag * basis) ** 2))


def fit_params(log, dt=DT) -> FlightModelParams:
    """Fit ``alpha`` (bounded scalar search) and the input magnitude (least squares).

    ``log`` is a sequence of ``(commanded direction, observed position)``
    pairs, one per control period, starting from hover.
    """
    commands = np.array([np.asarray(c, dtype=np.float64) for c, _ in log]).reshape(-1, 3)
    positions = np.array([np.asarray(p, dtype=np.float64) for _, p in log]).reshape(-1, 3)
    if len(log) < 5:
        raise DegenerateLog(f"need at least 5 logged steps, got {len(log)}")
    if np.allclose(commands[:-1], commands[0]):
        raise DegenerateLog("all commands are identical; the input magnitude is unidentifiable")
    # the last command has no observed outcome
    commands = commands[:-1]
    res = minimize_scalar(lambda a: _fit_magnitude(commands, positions, a, dt)[1],
                          bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12})
    alpha = float(res.x)
    for edge in (0.0, 1.0):
        if _fit_magnitude(commands, positions, edge, dt)[1] < _fit_magnitude(commands, positions, alpha, dt)[1]:
            alpha = edge
    magnitude, _ = _fit_magnitude(commands, positions, alpha, dt)
    return FlightModelParams(dt, alpha, max(magnitude, 0.0))


def one_step_errors(log, params=None, dt=DT) -> np.ndarray:
    """Per-step prediction error norms on a log; ``params=None`` is the zero-acceleration model."""
    commands = np.array([c for c, _ in log], dtype=np.float64).reshape(-1, 3)[:-1]
    positions = np.array([p for _, p in log], dtype=np.float64).reshape(-1, 3)
    if params is None:
        magnitude, s = 0.0, np.zeros_like(commands)
    else:
        magnitude, s = params.a_input_magnitude, _blended_inputs(commands, params.alpha)
    errors = []
    velocity = np.zeros(3)
    for t in range(len(commands)):
        accel = magnitude * s[t]
        predicted = positions[t] + velocity * dt + 0.5 * accel * dt**2
        errors.append(np.linalg.norm(positions[t + 1] - predicted))
        # velocity carried to the next step: observed displacement plus the half-step correction
        velocity = (positions[t + 1] - positions[t]) / dt + 0.5 * accel * dt
    return np.array(errors)


def random_directions(rng, n, hold=3):
    """Random unit commands (with occasional hover) held for ``hold`` periods."""
    out = []
    while len(out) < n:
        if rng.random() < 0.15:
            d = np.zeros(3)
        else:
            d = rng.normal(size=3)
            d[2] *= 0.5
            d /= np.linalg.norm(d)
        out.extend([d] * hold)
    return np.array(out[:n])


def record_flight_log(dynamics: ReferenceDynamics, directions, start=(0.0, 0.0, 1.5)):
    """Fly ``dynamics`` from hover with velocity commands ``v_max * direction``."""
    position = np.asarray(start, dtype=np.float64)
    velocity = np.zeros(3)
    log = []
    for d in directions:
        log.append((np.asarray(d, dtype=np.float64), position.copy()))
        position, velocity = dynamics.step(position, velocity, dynamics.v_max * np.asarray(d))
    log.append((np.zeros(3), position.copy()))
    return log


def write_flight_log(log, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FLIGHT_LOG_HEADER)
        for i, (cmd, pos) in enumerate(log):
            writer.writerow([i] + [repr(float(v)) for v in cmd] + [repr(float(v)) for v in pos])


def read_flight_log(path):
    path = Path(path)
    log = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != FLIGHT_LOG_HEADER:
            raise ParseError(f"{path}: expected header {','.join(FLIGHT_LOG_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(FLIGHT_LOG_HEADER):
                raise ParseError(f"{path}:{lineno}: expected {len(FLIGHT_LOG_HEADER)} columns")
            try:
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            log.append((np.array(vals[:3]), np.array(vals[3:])))
    return log
