"""Differentiable gaussian splatting at desk scale."""
from .camera import CameraPose, Intrinsics
from .gaussians import GaussianScene, covariance_tensor, covariance_world, quat_to_rotmat
from .raster import backend, rasterize, set_backend
from .render import Projected, project, render, render_numpy

__all__ = [
    "CameraPose",
    "GaussianScene",
    "Intrinsics",
    "Projected",
    "backend",
    "covariance_tensor",
    "covariance_world",
    "project",
    "quat_to_rotmat",
    "rasterize",
    "render",
    "render_numpy",
    "set_backend",
]
