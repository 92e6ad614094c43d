"""Pinhole camera model.

World frame is z-up. Camera frame follows the usual vision convention:
x right, y down, z along the optical axis. ``CameraPose.rotation`` maps
world-frame vectors into the camera frame, so a world point ``X`` has camera
coordinates ``R @ (X - C)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateLookAt, NonPositiveDepth

EPS_DEPTH = 1e-3
WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Intrinsics:
    fx: float = 500.0
    fy: float = 500.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class CameraPose:
    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        pos = np.array(self.position, dtype=np.float64).reshape(3)
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-8) or np.linalg.det(rot) <= 0:
            raise ValueError("rotation must be a proper rotation matrix")
        pos.setflags(write=False)
        rot.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "rotation", rot)

    @property
    def optical_axis(self) -> np.ndarray:
        """Viewing direction in world coordinates."""
        return self.rotation[2].copy()

    def to_camera(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.position) @ self.rotation.T

    def to_world(self, points_cam) -> np.ndarray:
        return np.asarray(points_cam, dtype=np.float64) @ self.rotation + self.position

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return np.array_equal(self.position, other.position) and np.array_equal(self.rotation, other.rotation)

    def __hash__(self):
        return hash((self.position.tobytes(), self.rotation.tobytes()))


def project(points, cam: CameraPose, k: Intrinsics) -> np.ndarray:
    """Project ``(..., 3)`` world points to ``(..., 2)`` pixel coordinates."""
    pc = cam.to_camera(points)
    z = pc[..., 2]
    if np.any(z <= EPS_DEPTH):
        raise NonPositiveDepth(f"minimum depth {z.min():.4g} m is not in front of the camera")
    u = k.fx * pc[..., 0] / z + k.cx
    v = k.fy * pc[..., 1] / z + k.cy
    return np.stack([u, v], axis=-1)


def project_jacobian(points, cam: CameraPose, k: Intrinsics) -> np.ndarray:
    """Per-point ``(2, 3)`` Jacobian of the pixel coordinates w.r.t. the world point."""
    pc = cam.to_camera(points)
    x, y, z = pc[..., 0], pc[..., 1], pc[..., 2]
    if np.any(z <= EPS_DEPTH):
        raise NonPositiveDepth(f"minimum depth {z.min():.4g} m is not in front of the camera")
    jac = np.zeros(pc.shape[:-1] + (2, 3))
    jac[..., 0, 0] = k.fx / z
    jac[..., 0, 2] = -k.fx * x / z**2
    jac[..., 1, 1] = k.fy / z
    jac[..., 1, 2] = -k.fy * y / z**2
    return jac @ cam.rotation


def back_project(pixels, cam: CameraPose, k: Intrinsics, depth) -> np.ndarray:
    """Lift pixels along their viewing rays to planar depth ``depth`` (camera z)."""
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise NonPositiveDepth("back-projection depth must be positive")
    pixels = np.asarray(pixels, dtype=np.float64)
    x = (pixels[..., 0] - k.cx) / k.fx
    y = (pixels[..., 1] - k.cy) / k.fy
    rays = np.stack([x, y, np.ones_like(x)], axis=-1)
    return cam.to_world(rays * depth[..., None] if depth.ndim else rays * depth)


def look_at(position, target, up=WORLD_UP) -> CameraPose:
    """Camera at ``position`` whose optical axis passes through ``target`` with zero roll."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise DegenerateLookAt("camera position coincides with its target")
    forward = forward / norm
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(forward, up)
    rnorm = np.linalg.norm(right)
    if rnorm < 1e-9:
        raise DegenerateLookAt("view direction is parallel to the up vector")
    right /= rnorm
    down = np.cross(forward, right)
    return CameraPose(position, np.stack([right, down, forward]))


def in_image(pixels, k: Intrinsics, margin: float = 0.0) -> bool:
    """True when every pixel lies inside the image grown by ``margin`` pixels."""
    pixels = np.asarray(pixels)
    u, v = pixels[..., 0], pixels[..., 1]
    return bool(np.all((u >= -margin) & (u <= k.width + margin) & (v >= -margin) & (v <= k.height + margin)))
