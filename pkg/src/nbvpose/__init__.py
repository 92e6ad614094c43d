"""Active next-best-view selection for monocular 3D human pose estimation."""

__version__ = "0.1.0"
