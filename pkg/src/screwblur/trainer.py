"""Joint optimisation of the gaussian scene, the blur kernel and the compositor.

Each step takes one blurry training image, predicts N camera poses across its
exposure, renders a sub-frame per pose, fuses them with the compositor and
backpropagates the photometric loss into every learnable part.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, NonFiniteGradientError, ParamGroup, Tensor, constant, exponential_decay
from .checkpoint import Checkpoint
from .compositor import WeightCnn, composite
from .config import RunConfig, from_dict
from .kernel import BlurKernel, KernelConfig, sample_times
from .liegroup import RigidTransform, rotation_angle
from .losses import psnr, ssim, total_loss
from .scenedata import DataError, Dataset
from .splat import GaussianScene, Intrinsics, render, render_numpy, set_backend

KERNEL_GROUPS = ("embeddings", "encoders", "f", "g", "decoders")
CNN_SEED_OFFSET = 7919


class TrainingDiverged(FloatingPointError):
    def __init__(self, iteration: int, reason: str, checkpoint_path: str | None):
        where = f"; last finite state saved to {checkpoint_path}" if checkpoint_path else ""
        super().__init__(f"training diverged at iteration {iteration}: {reason}{where}")
        self.iteration = iteration
        self.checkpoint_path = checkpoint_path


def _dtype(cfg: RunConfig):
    return np.float32 if cfg.train.precision == "float32" else np.float64


def _apply_backend(cfg: RunConfig) -> None:
    if cfg.render.backend != "auto":
        set_backend(cfg.render.backend)


def init_scene(points: np.ndarray, background, sh_degree: int, opacity: float, dtype=np.float64) -> GaussianScene:
    """Gaussians at the given points: isotropic scales from the 3 nearest neighbours."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] < 1:
        raise DataError("initial point set is empty")
    xyz = points[:, :3]
    colors = points[:, 3:6] if points.shape[1] >= 6 else np.full((len(xyz), 3), 0.5)
    d2 = np.sum((xyz[:, None, :] - xyz[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    k = min(3, len(xyz) - 1)
    if k > 0:
        near = np.sort(d2, axis=1)[:, :k].mean(axis=1)
    else:
        near = np.full(len(xyz), 0.01)
    scale = np.sqrt(np.maximum(near, 1e-7))
    quats = np.tile([1.0, 0.0, 0.0, 0.0], (len(xyz), 1))
    return GaussianScene.from_arrays(
        xyz, quats, np.repeat(scale[:, None], 3, axis=1), np.full(len(xyz), opacity), colors, background, sh_degree, dtype
    )


def camera_extent(poses: list[RigidTransform]) -> float:
    centers = np.array([-p.rot.T @ p.trans for p in poses])
    radius = float(np.max(np.linalg.norm(centers - centers.mean(axis=0), axis=1)))
    return 1.1 * radius if radius > 0 else 1.0


def kernel_config(cfg: RunConfig) -> KernelConfig:
    use_rigid, use_deform, _ = cfg.train.flags
    return KernelConfig(
        n_poses=cfg.train.n_poses,
        theta_gain=cfg.train.theta_gain,
        time_input=cfg.train.time_input,
        use_rigid=use_rigid,
        use_deform=use_deform,
        deform_init=cfg.train.deform_init,
        solver=cfg.solver,
    )


@dataclass
class Models:
    """Everything needed to render from a checkpoint."""

    cfg: RunConfig
    scene: GaussianScene
    kernel: BlurKernel
    cnn: WeightCnn
    intrinsics: Intrinsics
    bases: list[RigidTransform]
    iteration: int

    def compositor_active(self, iteration: int | None = None) -> bool:
        it = self.iteration if iteration is None else iteration
        return self.cfg.train.flags[2] and it >= self.cfg.train.activation_iteration()

    def trajectory(self, idx: int, times=None):
        base = self.bases[idx]
        return self.kernel.trajectory_tensors(base.rot, base.trans, idx, times)

    def blurred(self, idx: int, iteration: int | None = None):
        """Predicted blurry image for training image ``idx`` plus its sub-frames and weights."""
        rot, trans, drot = self.trajectory(idx)
        frames = [render(self.scene, (rot[n], trans[n]), self.intrinsics) for n in range(rot.shape[0])]
        pred, weights = composite(frames, self.cnn, self.compositor_active(iteration))
        return pred, frames, weights, drot


def restore(ckpt: Checkpoint) -> Models:
    cfg = from_dict(ckpt.config)
    _apply_backend(cfg)
    dtype = _dtype(cfg)
    n_img = len(ckpt.base_poses)
    scene = GaussianScene(
        background=np.asarray(ckpt.background, dtype=float),
        **{k: Tensor(np.asarray(v, dtype=dtype), requires_grad=True, name=k) for k, v in ckpt.scene.items()},
    )
    kernel = BlurKernel(n_img, kernel_config(cfg), seed=cfg.train.seed, dtype=dtype)
    kernel.load_state(ckpt.kernel)
    cnn = WeightCnn(cfg.train.compositor_channels, seed=cfg.train.seed + CNN_SEED_OFFSET, dtype=dtype)
    cnn.load_state(ckpt.compositor)
    bases = [RigidTransform.from_matrix(np.asarray(m, dtype=float)) for m in ckpt.base_poses]
    return Models(cfg, scene, kernel, cnn, Intrinsics(**ckpt.intrinsics), bases, ckpt.iteration)


class Trainer:
    def __init__(self, dataset: Dataset, cfg: RunConfig | None = None, checkpoint: Checkpoint | None = None):
        if not dataset.train:
            raise DataError("dataset has no training images")
        if checkpoint is not None:
            cfg = from_dict(checkpoint.config)
        self.cfg = cfg = cfg or RunConfig()
        _apply_backend(cfg)
        self.dataset = dataset
        self.dtype = dtype = _dtype(cfg)
        tc = cfg.train
        self.bases = [r.base for r in dataset.train]
        self.intr = dataset.intrinsics
        self.targets = [np.asarray(r.blur, dtype=dtype) for r in dataset.train]
        if dataset.points is not None:
            pts = dataset.points
        else:
            raise DataError("dataset has no initial point set")
        self.scene = init_scene(pts, dataset.background, cfg.render.sh_degree, tc.init_opacity, dtype)
        self.kernel = BlurKernel(len(dataset.train), kernel_config(cfg), seed=tc.seed, dtype=dtype)
        self.cnn = WeightCnn(tc.compositor_channels, seed=tc.seed + CNN_SEED_OFFSET, dtype=dtype)
        self.optimizer = self._build_optimizer(camera_extent(self.bases))
        self.iteration = 0
        if checkpoint is not None:
            self._load(checkpoint)

    # -- setup ---------------------------------------------------------
    def _build_optimizer(self, extent: float) -> Adam:
        tc = self.cfg.train
        iters = tc.iterations
        s = self.scene
        groups = [
            ParamGroup("means", {"means": s.means}, exponential_decay(tc.position_lr_init * extent, tc.position_lr_final * extent, iters)),
            ParamGroup("opacity", {"opacity_logits": s.opacity_logits}, constant(tc.opacity_lr)),
            ParamGroup("scale", {"log_scales": s.log_scales}, constant(tc.scale_lr)),
            ParamGroup("rotation", {"quats": s.quats}, constant(tc.rotation_lr)),
            ParamGroup("color", {"sh": s.sh}, constant(tc.color_lr)),
        ]
        kernel_sched = exponential_decay(tc.kernel_lr_init, tc.kernel_lr_final, iters)
        # The deform decoder starts near zero, so Adam's normalised steps would
        # move the whole deform branch (encoder, derivative net, decoder) at full
        # rate on vanishing gradients; the branch gets its own scaled schedule.
        deform_sched = exponential_decay(tc.kernel_lr_init * tc.deform_lr_scale, tc.kernel_lr_final * tc.deform_lr_scale, iters)
        for name, params in self.kernel.parameter_groups().items():
            if name == "g":
                deform, params = params, {}
            else:
                deform = {k: v for k, v in params.items() if k.startswith("d.")}
                params = {k: v for k, v in params.items() if not k.startswith("d.")}
            if deform and not tc.freeze_deform_decoder:
                groups.append(ParamGroup(f"kernel.{name}.deform", deform, deform_sched))
            if params:
                groups.append(ParamGroup(f"kernel.{name}", params, kernel_sched))
        if tc.flags[2]:
            groups.append(
                ParamGroup("compositor", self.cnn.parameters(), exponential_decay(tc.compositor_lr_init, tc.compositor_lr_final, iters))
            )
        return Adam(groups)

    def models(self) -> Models:
        return Models(self.cfg, self.scene, self.kernel, self.cnn, self.intr, self.bases, self.iteration)

    def image_order(self, iteration: int) -> int:
        n = len(self.bases)
        epoch, pos = divmod(iteration, n)
        perm = np.random.default_rng([self.cfg.train.seed, epoch]).permutation(n)
        return int(perm[pos])

    # -- checkpoints ---------------------------------------------------
    def checkpoint(self) -> Checkpoint:
        opt = {k: {"step": st.step, "m": st.m.copy(), "v": st.v.copy()} for k, st in self.optimizer.state.items()}
        return Checkpoint(
            config=self.cfg.to_dict(),
            config_hash=self.cfg.digest(),
            iteration=self.iteration,
            intrinsics=self.intr.as_dict(),
            background=[float(v) for v in self.scene.background],
            base_poses=[b.matrix().tolist() for b in self.bases],
            scene=self.scene.state(),
            kernel=self.kernel.state(),
            compositor=self.cnn.state(),
            optimizer=opt,
        )

    def _load(self, ckpt: Checkpoint) -> None:
        if len(ckpt.base_poses) != len(self.bases):
            raise DataError(f"checkpoint has {len(ckpt.base_poses)} training images, dataset has {len(self.bases)}")
        n_gauss = ckpt.scene["means"].shape[0]
        if n_gauss != self.scene.n:
            self.scene = GaussianScene(
                background=self.scene.background,
                **{k: Tensor(np.asarray(v, dtype=self.dtype), requires_grad=True, name=k) for k, v in ckpt.scene.items()},
            )
            self.optimizer = self._build_optimizer(camera_extent(self.bases))
        self.scene.load_state(ckpt.scene)
        self.kernel.load_state(ckpt.kernel)
        self.cnn.load_state(ckpt.compositor)
        self.optimizer.state.clear()
        for k, st in ckpt.optimizer.items():
            self.optimizer.state[k] = ad.AdamState(int(st["step"]), np.array(st["m"]), np.array(st["v"]))
        self.iteration = ckpt.iteration

    # -- optimisation --------------------------------------------------
    def _clip_kernel(self) -> None:
        grads = [
            t.grad
            for g in self.optimizer.groups
            if g.name.startswith("kernel.")
            for t in g.params.values()
            if t.grad is not None
        ]
        norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))
        if math.isfinite(norm) and norm > self.cfg.train.clip_norm:
            scale = self.cfg.train.clip_norm / norm
            for g in grads:
                g *= scale

    def step(self) -> dict[str, float]:
        """One optimisation step on one image; returns the loss terms (before the update)."""
        it = self.iteration
        idx = self.image_order(it)
        self.optimizer.zero_grad()
        pred, _, _, drot = self.models().blurred(idx, it)
        loss, terms = total_loss(pred, self.targets[idx], drot, self.cfg.loss)
        if not math.isfinite(terms["loss"]):
            raise FloatingPointError(f"non-finite loss on image {idx}")
        loss.backward()
        self._clip_kernel()
        self.optimizer.step(it)
        self.iteration += 1
        terms["image"] = idx
        return terms

    # -- evaluation ----------------------------------------------------
    def training_loss(self) -> dict[str, float]:
        """Mean loss terms over all training images at the current parameters."""
        acc: dict[str, float] = {}
        with ad.no_grad():
            for idx, target in enumerate(self.targets):
                pred, _, _, drot = self.models().blurred(idx)
                _, terms = total_loss(pred, target, drot, self.cfg.loss)
                for k, v in terms.items():
                    acc[k] = acc.get(k, 0.0) + v
        return {k: v / len(self.targets) for k, v in acc.items()}

    def kernel_stats(self) -> dict[str, float]:
        times = sample_times(self.cfg.train.n_poses)
        angles, resid = [], [0.0]
        with ad.no_grad():
            for idx in range(len(self.bases)):
                if self.kernel.cfg.use_rigid:
                    angles += [rotation_angle(t.rot) for t in self.kernel.rigid_transforms(idx, times)]
                if self.kernel.cfg.use_deform:
                    for t in self.kernel.deform_transforms(idx, times):
                        r = t.rot.astype(np.float64)
                        resid.append(float(np.linalg.norm(r @ r.T - np.eye(3))))
        return {"rigid_angle_mean": float(np.mean(angles)) if angles else 0.0, "deform_ortho_max": max(resid)}

    def eval_record(self) -> dict:
        models = self.models()
        rec: dict = {"iteration": self.iteration, "compositor_active": models.compositor_active()}
        rec.update(self.training_loss())
        train_views = [(b, r.sharp) for b, r in zip(self.bases, self.dataset.train) if r.sharp is not None]
        for split, views in (("train", train_views), ("test", [(v.pose, v.sharp) for v in self.dataset.test])):
            if views:
                table = evaluate_views(self.scene, self.intr, views)
                rec[f"{split}_psnr"] = table["mean_psnr"]
                rec[f"{split}_ssim"] = table["mean_ssim"]
        rec.update(self.kernel_stats())
        return rec

    def fit(self, log_path=None, checkpoint_path=None, progress=None) -> list[dict]:
        """Train to ``cfg.train.iterations``; returns the metric records.

        On a non-finite loss or gradient the last finite state is written to
        ``checkpoint_path`` (when given) and :class:`TrainingDiverged` is raised.
        """
        tc = self.cfg.train
        records: list[dict] = []
        log = None
        if log_path is not None:
            log = open(log_path, "a" if self.iteration > 0 else "w")
        try:

            def emit():
                rec = self.eval_record()
                records.append(rec)
                if log is not None:
                    log.write(json.dumps(rec, sort_keys=True) + "\n")
                    log.flush()
                if progress is not None:
                    progress(rec)

            while self.iteration < tc.iterations:
                if self.iteration % tc.eval_interval == 0:
                    emit()
                try:
                    self.step()
                except (FloatingPointError, NonFiniteGradientError) as exc:
                    if checkpoint_path is not None:
                        self.checkpoint().save(checkpoint_path)
                    raise TrainingDiverged(self.iteration, str(exc), str(checkpoint_path) if checkpoint_path else None) from exc
                if checkpoint_path is not None and tc.checkpoint_interval and self.iteration % tc.checkpoint_interval == 0:
                    self.checkpoint().save(checkpoint_path)
            emit()
            if checkpoint_path is not None:
                self.checkpoint().save(checkpoint_path)
        finally:
            if log is not None:
                log.close()
        return records


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    records: list[dict] = field(default_factory=list)


def train(dataset: Dataset, cfg: RunConfig | None = None, log_path=None, checkpoint_path=None, progress=None) -> TrainResult:
    trainer = Trainer(dataset, cfg)
    records = trainer.fit(log_path, checkpoint_path, progress)
    return TrainResult(trainer.checkpoint(), records)


# -- inference -------------------------------------------------------------
def render_sharp(ckpt: Checkpoint | Models, pose) -> np.ndarray:
    """Render the learned scene from ``pose`` with no kernel and no compositor."""
    models = ckpt if isinstance(ckpt, Models) else restore(ckpt)
    return render_numpy(models.scene, pose, models.intrinsics)


def evaluate_views(scene: GaussianScene, intr: Intrinsics, views) -> dict:
    rows = []
    for i, (pose, target) in enumerate(views):
        img = render_numpy(scene, pose, intr)
        rows.append({"view": i, "psnr": psnr(img, target), "ssim": ssim(img, target)})
    if not rows:
        raise DataError("evaluation split is empty")
    return {
        "views": rows,
        "mean_psnr": float(np.mean([r["psnr"] for r in rows])),
        "mean_ssim": float(np.mean([r["ssim"] for r in rows])),
    }


def evaluate(ckpt: Checkpoint | Models, views) -> dict:
    """Per-view and mean PSNR/SSIM of sharp renders against ``(pose, image)`` pairs.

    ``views`` may also be a list of :class:`~screwblur.scenedata.TestView`.
    """
    models = ckpt if isinstance(ckpt, Models) else restore(ckpt)
    pairs = [(v.pose, v.sharp) if hasattr(v, "sharp") else v for v in views]
    return evaluate_views(models.scene, models.intrinsics, pairs)


def export_trajectory(ckpt: Checkpoint | Models, idx: int, n: int | None = None) -> list[dict]:
    """Camera matrices and rigid screw parameters at ``n`` exposure times."""
    models = ckpt if isinstance(ckpt, Models) else restore(ckpt)
    if not 0 <= idx < len(models.bases):
        raise IndexError(f"image index {idx} out of range for {len(models.bases)} images")
    times = sample_times(n or models.cfg.train.n_poses)
    cams = models.kernel.camera_trajectory(models.bases[idx], idx, len(times))
    screws = models.kernel.screws(idx, times) if models.kernel.cfg.use_rigid else [None] * len(times)
    rigid = models.kernel.rigid_transforms(idx, times) if models.kernel.cfg.use_rigid else [None] * len(times)
    out = []
    for t, cam, s, r in zip(times, cams, screws, rigid):
        entry = {"t": float(t), "camera": cam.matrix().astype(float).tolist()}
        if s is not None:
            entry["screw"] = {"axis": s.axis.astype(float).tolist(), "angle": float(s.angle), "trans": s.trans.astype(float).tolist()}
            entry["rigid"] = r.matrix().astype(float).tolist()
        out.append(entry)
    return out
