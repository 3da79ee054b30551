from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..liegroup import RigidTransform


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image extents must be positive, got {self.width}x{self.height}")

    @classmethod
    def centered(cls, focal: float, width: int, height: int) -> "Intrinsics":
        return cls(focal, focal, width / 2.0, height / 2.0, width, height)

    def as_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera transform plus pinhole intrinsics."""

    world_to_cam: RigidTransform
    intrinsics: Intrinsics

    @property
    def center(self) -> np.ndarray:
        return -self.world_to_cam.rot.T @ self.world_to_cam.trans

    def with_transform(self, t: RigidTransform) -> "CameraPose":
        return CameraPose(t, self.intrinsics)
