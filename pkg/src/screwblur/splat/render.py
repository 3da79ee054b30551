"""Projection of world-space gaussians and the full differentiable render."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from .camera import CameraPose, Intrinsics
from .gaussians import GaussianScene, covariance_tensor, eval_colors
from .raster import rasterize

NEAR_PLANE = 0.01
LOW_PASS = 0.3
MIN_DET = 1e-12


@dataclass
class Projected:
    ids: np.ndarray  # indices into the scene of the surviving gaussians
    means2d: Tensor  # (M, 2) pixel coordinates
    cov2d: Tensor  # (M, 2, 2) including the low-pass floor
    conics: Tensor  # (M, 3) upper triangle of the inverse covariance
    depths: np.ndarray
    radii: np.ndarray
    opacities: Tensor
    colors: Tensor


def _pose_tensors(pose, dtype) -> tuple[Tensor, Tensor]:
    if isinstance(pose, CameraPose):
        pose = pose.world_to_cam
    if hasattr(pose, "rot"):
        return Tensor(np.asarray(pose.rot, dtype=dtype)), Tensor(np.asarray(pose.trans, dtype=dtype))
    rot, trans = pose
    return ad.astensor(rot), ad.astensor(trans)


def project(scene: GaussianScene, pose, intr: Intrinsics) -> Projected:
    """Project every gaussian in front of the camera to image space.

    ``pose`` is a world-to-camera transform: a :class:`CameraPose`, a
    :class:`~screwblur.liegroup.RigidTransform`, or a ``(rot, trans)`` pair of
    tensors (the differentiable route used by the blur kernel). Gaussians with
    depth at or below the near plane are dropped, as are those whose projected
    covariance is degenerate.
    """
    dtype = scene.means.dtype
    rot, trans = _pose_tensors(pose, dtype)
    p_cam = scene.means @ ad.swapaxes(rot, -1, -2) + trans
    ids = np.flatnonzero(p_cam.data[:, 2] > NEAR_PLANE)
    p = p_cam[ids]
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    inv_z = 1.0 / z
    means2d = ad.stack([x * inv_z * intr.fx + intr.cx, y * inv_z * intr.fy + intr.cy], axis=1)

    zeros = Tensor(np.zeros(len(ids), dtype=dtype))
    inv_z2 = inv_z * inv_z
    jac = ad.stack(
        [inv_z * intr.fx, zeros, -(x * inv_z2) * intr.fx, zeros, inv_z * intr.fy, -(y * inv_z2) * intr.fy],
        axis=1,
    ).reshape(-1, 2, 3)
    sigma = covariance_tensor(scene.quats[ids], scene.log_scales[ids])
    jw = jac @ rot
    cov2d = jw @ sigma @ ad.swapaxes(jw, -1, -2) + np.eye(2, dtype=dtype) * LOW_PASS

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det_np = a.data * c.data - b.data * b.data
    keep = np.flatnonzero(det_np >= MIN_DET)
    if len(keep) < len(ids):
        ids = ids[keep]
        means2d, cov2d, a, b, c, p = means2d[keep], cov2d[keep], a[keep], b[keep], c[keep], p[keep]
        det_np = det_np[keep]
    det = a * c - b * b
    conics = ad.stack([c / det, -b / det, a / det], axis=1)

    mid = 0.5 * (a.data + c.data)
    lam = mid + np.sqrt(np.maximum(0.1, mid * mid - det_np))
    radii = np.ceil(3.0 * np.sqrt(lam))

    cam_center = -(trans @ rot)  # -R^T t
    colors = eval_colors(scene.sh[ids], scene.means[ids], cam_center)
    opac = ad.sigmoid(scene.opacity_logits[ids])
    return Projected(ids, means2d, cov2d, conics, p.data[:, 2].copy(), radii, opac, colors)


def render(scene: GaussianScene, pose, intr: Intrinsics | None = None, height: int | None = None, width: int | None = None) -> Tensor:
    """Render an (H, W, 3) linear-RGB image; differentiable in scene and pose tensors."""
    if intr is None:
        if not isinstance(pose, CameraPose):
            raise ValueError("intrinsics required unless pose is a CameraPose")
        intr = pose.intrinsics
    height = intr.height if height is None else height
    width = intr.width if width is None else width
    proj = project(scene, pose, intr)
    return rasterize(
        proj.means2d,
        proj.conics,
        proj.opacities,
        proj.colors,
        proj.radii,
        proj.depths,
        scene.background,
        height,
        width,
    )


def render_numpy(scene: GaussianScene, pose, intr: Intrinsics | None = None) -> np.ndarray:
    with ad.no_grad():
        return render(scene, pose, intr).data.copy()
