"""Per-image continuous camera trajectories.

Each training image owns an embedding. Two latent ODEs started from encoded
copies of it produce, at N exposure times, a rigid screw motion and a
near-identity deformable correction. Both act in the camera's own frame:
the camera-to-world pose at time ``t`` is ``c2w_0 @ rigid(t) @ deform(t)``,
and the renderer receives its inverse.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .liegroup import AXIS_EPS, RigidTransform, ScrewAxis
from .ode import SolverConfig, ode_solve


@dataclass
class KernelConfig:
    n_poses: int = 9
    latent_dim: int = 64
    theta_gain: float = 0.1
    time_input: bool = False
    use_rigid: bool = True
    use_deform: bool = True
    deform_init: float = 1e-5
    solver: SolverConfig = field(default_factory=SolverConfig)


def sample_times(n: int) -> list[float]:
    """``n`` uniformly spaced times covering the normalised exposure [0, 1]."""
    if n < 2:
        raise ValueError(f"need at least 2 exposure samples, got {n}")
    return [i / (n - 1) for i in range(n)]


class Linear:
    """Affine map ``x @ W + b``; default init is U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float64, bound: float | None = None, name: str = ""):
        bound = 1.0 / np.sqrt(n_in) if bound is None else bound
        self.weight = Tensor(rng.uniform(-bound, bound, (n_in, n_out)).astype(dtype), requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(rng.uniform(-bound, bound, n_out).astype(dtype), requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


class DerivativeNet:
    """One hidden ReLU layer; optionally sees time as an extra input."""

    def __init__(self, dim: int, rng: np.random.Generator, dtype=np.float64, time_input: bool = False, name: str = "f"):
        self.time_input = time_input
        self.hidden = Linear(dim + (1 if time_input else 0), dim, rng, dtype, name=f"{name}.hidden")
        self.out = Linear(dim, dim, rng, dtype, name=f"{name}.out")

    def __call__(self, z: Tensor, t: float) -> Tensor:
        if self.time_input:
            z = ad.concat([z, Tensor(np.array([t], dtype=z.dtype))])
        return self.out(ad.relu(self.hidden(z)))

    def parameters(self) -> dict[str, Tensor]:
        return {f"hidden.{k}": v for k, v in self.hidden.parameters().items()} | {
            f"out.{k}": v for k, v in self.out.parameters().items()
        }


def skew_batch(v: Tensor) -> Tensor:
    """(N, 3) -> (N, 3, 3) cross-product matrices."""
    x, y, z = v[:, 0], v[:, 1], v[:, 2]
    zero = Tensor(np.zeros(v.shape[0], dtype=v.dtype))
    return ad.stack([zero, -z, y, z, zero, -x, -y, x, zero], axis=1).reshape(-1, 3, 3)


def decode_screw(raw: Tensor, theta_gain: float) -> tuple[Tensor, Tensor, Tensor]:
    """Split decoder output (N, 7) into unit axis (N, 3), angle (N,), translation (N, 3).

    The axis comes only from columns 0-2 and the angle only from column 3.
    Axes shorter than the normalisation epsilon collapse to zero, which makes
    the screw a pure translation.
    """
    omega = raw[:, 0:3]
    theta = raw[:, 3] * theta_gain
    v = raw[:, 4:7]
    norm = ad.sqrt(ad.tsum(ad.square(omega), axis=1, keepdims=True))
    small = norm.data < AXIS_EPS
    axis = ad.where(small, 0.0, omega / ad.where(small, 1.0, norm))
    return axis, theta, v


def screw_exp(axis: Tensor, theta: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """Batched screw exponential: rotations (N, 3, 3) and translations (N, 3)."""
    k = skew_batch(axis)
    k2 = k @ k
    s = ad.sin(theta).reshape(-1, 1, 1)
    c1 = (1.0 - ad.cos(theta)).reshape(-1, 1, 1)
    th = theta.reshape(-1, 1, 1)
    eye = np.eye(3, dtype=axis.dtype)
    rot = eye + s * k + c1 * k2
    g = eye * th + c1 * k + (th - s) * k2
    trans = (g @ v.reshape(-1, 3, 1)).reshape(-1, 3)
    return rot, trans


def inv3(m: Tensor) -> Tensor:
    """Batched 3x3 inverse via the adjugate, (N, 3, 3) -> (N, 3, 3)."""
    a = [[m[:, i, j] for j in range(3)] for i in range(3)]

    def cof(i, j):
        r = [x for x in range(3) if x != i]
        c = [x for x in range(3) if x != j]
        minor = a[r[0]][c[0]] * a[r[1]][c[1]] - a[r[0]][c[1]] * a[r[1]][c[0]]
        return minor if (i + j) % 2 == 0 else -minor

    cofs = [[cof(i, j) for j in range(3)] for i in range(3)]
    det = a[0][0] * cofs[0][0] + a[0][1] * cofs[0][1] + a[0][2] * cofs[0][2]
    # inverse = adjugate / det, adjugate = cofactor matrix transposed
    adj = ad.stack([cofs[j][i] for i in range(3) for j in range(3)], axis=1).reshape(-1, 3, 3)
    return adj / det.reshape(-1, 1, 1)


class BlurKernel:
    """Learnable trajectory model for ``n_images`` blurry training images."""

    GROUPS = ("embeddings", "encoders", "f", "g", "decoders")

    def __init__(self, n_images: int, cfg: KernelConfig | None = None, seed: int = 0, dtype=np.float64):
        self.cfg = cfg or KernelConfig()
        self.n_images = n_images
        self.dtype = dtype
        d = self.cfg.latent_dim
        rng = np.random.default_rng(seed)
        self.embeddings = Tensor(rng.normal(size=(n_images, d)).astype(dtype), requires_grad=True, name="embeddings")
        self.enc_r = Linear(d, d, rng, dtype, name="enc_r")
        self.enc_d = Linear(d, d, rng, dtype, name="enc_d")
        self.f = DerivativeNet(d, rng, dtype, self.cfg.time_input, name="f")
        self.g = DerivativeNet(d, rng, dtype, self.cfg.time_input, name="g")
        self.dec_r = Linear(d, 7, rng, dtype, name="dec_r")
        eps = self.cfg.deform_init
        self.dec_d = Linear(d, 12, rng, dtype, bound=eps, name="dec_d")

    # -- parameters ----------------------------------------------------
    def parameter_groups(self) -> dict[str, dict[str, Tensor]]:
        return {
            "embeddings": {"table": self.embeddings},
            "encoders": {f"r.{k}": v for k, v in self.enc_r.parameters().items()}
            | {f"d.{k}": v for k, v in self.enc_d.parameters().items()},
            "f": self.f.parameters(),
            "g": self.g.parameters(),
            "decoders": {f"r.{k}": v for k, v in self.dec_r.parameters().items()}
            | {f"d.{k}": v for k, v in self.dec_d.parameters().items()},
        }

    def state(self) -> dict[str, np.ndarray]:
        return {f"{grp}.{k}": t.data.copy() for grp, ps in self.parameter_groups().items() for k, t in ps.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for grp, ps in self.parameter_groups().items():
            for k, t in ps.items():
                t.data = np.array(state[f"{grp}.{k}"], dtype=t.dtype)

    def zero_decoders(self) -> None:
        for t in self.dec_r.parameters().values():
            t.data[...] = 0.0
        for t in self.dec_d.parameters().values():
            t.data[...] = 0.0

    # -- forward -------------------------------------------------------
    def _check_index(self, idx: int) -> None:
        if not 0 <= idx < self.n_images:
            raise IndexError(f"image index {idx} out of range for {self.n_images} images")

    def _latents(self, idx: int, times, encoder: Linear, deriv: DerivativeNet) -> Tensor:
        self._check_index(idx)
        z0 = ad.relu(encoder(self.embeddings[idx]))
        zs = ode_solve(z0, deriv, 0.0, list(times), self.cfg.solver)
        return ad.stack(zs, axis=0)

    def rigid_screws(self, idx: int, times) -> tuple[Tensor, Tensor, Tensor]:
        raw = self.dec_r(self._latents(idx, times, self.enc_r, self.f))
        return decode_screw(raw, self.cfg.theta_gain)

    def rigid_tensors(self, idx: int, times) -> tuple[Tensor, Tensor]:
        return screw_exp(*self.rigid_screws(idx, times))

    def deform_tensors(self, idx: int, times) -> tuple[Tensor, Tensor]:
        out = self.dec_d(self._latents(idx, times, self.enc_d, self.g))
        rot = out[:, 0:9].reshape(-1, 3, 3) + np.eye(3, dtype=out.dtype)
        return rot, out[:, 9:12]

    def trajectory_tensors(self, base_rot, base_trans, idx: int, times=None):
        """World-to-camera rotations (N, 3, 3), translations (N, 3) and the deform rotations.

        ``base_rot``/``base_trans`` are the world-to-camera base pose. The
        deform rotations are ``None`` when the deformable branch is off.
        """
        times = sample_times(self.cfg.n_poses) if times is None else times
        n = len(times)
        base_rot = ad.astensor(np.asarray(base_rot, dtype=self.dtype) if not isinstance(base_rot, Tensor) else base_rot)
        base_trans = ad.astensor(np.asarray(base_trans, dtype=self.dtype) if not isinstance(base_trans, Tensor) else base_trans)
        # camera-to-world base pose
        c_rot = ad.swapaxes(base_rot, -1, -2)
        c_trans = -(c_rot @ base_trans)
        rot = ad.broadcast_to(c_rot, (n, 3, 3))
        trans = ad.broadcast_to(c_trans, (n, 3))
        deform_rot = None
        if self.cfg.use_rigid:
            rr, tr = self.rigid_tensors(idx, times)
            trans = (rot @ tr.reshape(-1, 3, 1)).reshape(-1, 3) + trans
            rot = rot @ rr
        if self.cfg.use_deform:
            deform_rot, td = self.deform_tensors(idx, times)
            trans = (rot @ td.reshape(-1, 3, 1)).reshape(-1, 3) + trans
            rot = rot @ deform_rot
            w_rot = inv3(rot)
        else:
            w_rot = ad.swapaxes(rot, -1, -2)
        w_trans = -(w_rot @ trans.reshape(-1, 3, 1)).reshape(-1, 3)
        return w_rot, w_trans, deform_rot

    # -- numpy conveniences ---------------------------------------------
    def rigid_transforms(self, idx: int, times) -> list[RigidTransform]:
        with ad.no_grad():
            rot, trans = self.rigid_tensors(idx, times)
        return [RigidTransform(r.copy(), t.copy()) for r, t in zip(rot.data, trans.data)]

    def deform_transforms(self, idx: int, times) -> list[RigidTransform]:
        """Raw (unprojected) deformable transforms; rotations are only near-orthogonal."""
        with ad.no_grad():
            rot, trans = self.deform_tensors(idx, times)
        return [RigidTransform(r.copy(), t.copy()) for r, t in zip(rot.data, trans.data)]

    def screws(self, idx: int, times) -> list[ScrewAxis]:
        with ad.no_grad():
            axis, theta, v = self.rigid_screws(idx, times)
        return [ScrewAxis(a.copy(), float(th), vv.copy()) for a, th, vv in zip(axis.data, theta.data, v.data)]

    def camera_trajectory(self, base: RigidTransform, idx: int, n: int | None = None) -> list[RigidTransform]:
        times = sample_times(n or self.cfg.n_poses)
        with ad.no_grad():
            rot, trans, _ = self.trajectory_tensors(base.rot, base.trans, idx, times)
        return [RigidTransform(r.copy(), t.copy()) for r, t in zip(rot.data, trans.data)]
