"""Simulated detectors: ground truth plus seeded Gaussian noise.

Every draw comes from a generator keyed by ``(seed, stream, frame,
candidate)``, so two rollouts that look at the same frame from the same
candidate view receive the very same noisy measurement.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDepth, SubjectNotVisible
from .geometry import CameraPose, Intrinsics, in_image, project
from .skeleton import HIP

STREAM_2D = 0
STREAM_3D = 1
STREAM_CALIB_2D = 2
STREAM_POLICY = 3
STREAM_INIT = 4
STREAM_FLIGHT_LOG = 5


@dataclass(frozen=True)
class NoiseModel:
    sigma_2d: float = 3.0
    sigma_3d: float = 0.03
    seed: int = 0
    margin: float = 0.0

    def __post_init__(self):
        if self.sigma_2d < 0 or self.sigma_3d < 0:
            raise ValueError("noise sigmas must be non-negative")


@dataclass(frozen=True, eq=False)
class Detection2D:
    joints2d: np.ndarray
    frame: int = 0


@dataclass(frozen=True, eq=False)
class Detection3D:
    """Hip-relative 3D joints in the detecting camera's frame, arbitrary scale."""

    joints3d_rel: np.ndarray
    frame: int = 0


def noise_rng(seed, stream, frame=0, candidate=0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), int(frame), int(candidate)]))


def detect_2d(truth, cam: CameraPose, k: Intrinsics, noise: NoiseModel, frame=0, candidate=0,
              stream=STREAM_2D) -> Detection2D:
    try:
        pixels = project(truth, cam, k)
    except NonPositiveDepth:
        raise SubjectNotVisible(f"frame {frame}: subject is behind candidate {candidate}") from None
    if not in_image(pixels, k, noise.margin):
        raise SubjectNotVisible(f"frame {frame}: subject leaves the image of candidate {candidate}")
    if noise.sigma_2d > 0:
        rng = noise_rng(noise.seed, stream, frame, candidate)
        pixels = pixels + rng.normal(0.0, noise.sigma_2d, size=pixels.shape)
    return Detection2D(pixels, frame)


def detect_3d_relative(truth, cam: CameraPose, noise: NoiseModel, scale_corruption=1.0, frame=0,
                       candidate=0) -> Detection3D:
    truth = np.asarray(truth, dtype=np.float64)
    rel = cam.to_camera(truth) - cam.to_camera(truth[HIP])
    rel = rel * scale_corruption
    if noise.sigma_3d > 0:
        rng = noise_rng(noise.seed, STREAM_3D, frame, candidate)
        rel = rel + rng.normal(0.0, noise.sigma_3d, size=rel.shape)
    rel[HIP] = 0.0
    return Detection3D(rel, frame)
