import numpy as np
import pytest

from nbvpose.geometry import Intrinsics, look_at
from nbvpose.skeleton import template_pose

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def ring_camera(angle_deg, radius=7.0, height=1.5, target=(0.0, 0.0, 1.0)):
    a = np.radians(angle_deg)
    target = np.asarray(target, dtype=float)
    return look_at([target[0] + radius * np.cos(a), target[1] + radius * np.sin(a), height], target)


@pytest.fixture
def k():
    return Intrinsics()


@pytest.fixture
def pose():
    return template_pose()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_window(rng, n_frames=3, sigma_2d=0.0, sigma_3d=0.0, jitter=0.0, observed=None, seed=0,
                motion=0.1, lift_scale=1.0):
    """A walking-ish window seen from ring cameras, with optional measurement noise and pose jitter.

    Returns ``(window, truth, calib)``.
    """
    from nbvpose.estimator import EstimationWindow, Measurement
    from nbvpose.sensing import NoiseModel, detect_2d, detect_3d_relative
    from nbvpose.skeleton import compute_bone_lengths

    base = template_pose()
    truth = np.stack([base + [motion * f, 0.0, 0.0] for f in range(n_frames)])
    truth[:, 1:] += rng.normal(scale=0.02, size=truth[:, 1:].shape)
    noise = NoiseModel(sigma_2d, sigma_3d, seed)
    meas = []
    for f in range(n_frames):
        if observed is not None and not observed[f]:
            meas.append(None)
            continue
        cam = ring_camera(rng.uniform(0, 360), target=truth[f, 0])
        meas.append(Measurement(detect_2d(truth[f], cam, Intrinsics(), noise, frame=f),
                                detect_3d_relative(truth[f], cam, noise, frame=f), cam))
    calib = compute_bone_lengths(base)
    poses = truth + rng.normal(scale=jitter, size=truth.shape) if jitter else truth.copy()
    return EstimationWindow(poses, meas, lift_scale=lift_scale), truth, calib
