"""Synthetic blurry datasets: toy scenes, ground-truth camera motion, manifests.

A dataset directory holds a ``manifest.yaml``, one sRGB PNG plus float
sidecar per image, and ``points.txt`` (noisy surface samples with colours,
standing in for a sparse reconstruction). Poses in the manifest are
world-to-camera 4x4 matrices written as 16 whitespace-separated reals.
"""
from __future__ import annotations

import colorsys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import liegroup as lg
from .imageio import load_float, load_png, save_float, save_png
from .liegroup import RigidTransform, ScrewAxis
from .splat import GaussianScene, Intrinsics, render_numpy

MANIFEST_NAME = "manifest.yaml"
POSE_TOL = 1e-4


class DataError(ValueError):
    pass


# -- toy scenes ------------------------------------------------------------
def make_toy_scene(seed: int, n_gaussians: int, sh_degree: int = 0, background=(0.0, 0.0, 0.0)) -> GaussianScene:
    """Reproducible random scene inside the unit box centred at the origin."""
    if n_gaussians < 1:
        raise ValueError("n_gaussians must be >= 1")
    rng = np.random.default_rng(seed)
    means = rng.uniform(-0.5, 0.5, (n_gaussians, 3))
    quats = rng.normal(size=(n_gaussians, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    scales = np.exp(rng.uniform(np.log(0.015), np.log(0.07), (n_gaussians, 3)))
    opac = rng.uniform(0.3, 0.9, n_gaussians)
    golden = 0.618033988749895
    hue0 = rng.uniform()
    colors = np.array(
        [
            colorsys.hsv_to_rgb((hue0 + i * golden) % 1.0, rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0))
            for i in range(n_gaussians)
        ]
    )
    return GaussianScene.from_arrays(
        means, quats, scales, opac, colors, background=background, sh_degree=sh_degree, requires_grad=False
    )


# -- trajectories ------------------------------------------------------------
@dataclass
class TrajectorySpec:
    """Ground-truth camera motion over the normalised exposure [0, 1].

    Motions act in the camera frame: the camera-to-world pose at time ``t``
    is ``c2w_base @ motion(t)``, and sub-poses are returned world-to-camera.

    ``screw``: ``motion(t) = exp([S] * angle * (t - 1/2))`` with
    ``S = (axis, trans)``; a zero axis makes ``angle`` a distance along ``trans``.
    ``linear-interp``: geodesic rotation and linear camera-centre interpolation
    from ``start`` to ``end`` (world-to-camera 4x4 matrices, row-major).
    ``composite``: the product of the screws in ``parts``.
    """

    kind: str = "screw"
    axis: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    angle: float = 0.0
    trans: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    start: list | None = None
    end: list | None = None
    parts: list = field(default_factory=list)
    n_sub: int = 32

    def __post_init__(self):
        if self.kind not in ("screw", "linear-interp", "composite"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.n_sub < 2:
            raise ValueError("a trajectory needs at least 2 sub-frames")
        n = float(np.linalg.norm(self.axis))
        if n > 0 and abs(n - 1.0) > 1e-9:
            raise ValueError(f"screw axis must be unit length or zero, got norm {n}")
        if self.kind == "linear-interp" and (self.start is None or self.end is None):
            raise ValueError("linear-interp trajectories need start and end poses")
        self.parts = [p if isinstance(p, TrajectorySpec) else TrajectorySpec(**p) for p in self.parts]

    def motion_at(self, t: float) -> RigidTransform:
        """Camera-frame motion relative to the mid-exposure pose (screw kinds only)."""
        if self.kind == "screw":
            return lg.exp_se3(ScrewAxis(np.asarray(self.axis, float), self.angle * (t - 0.5), np.asarray(self.trans, float)))
        if self.kind == "composite":
            out = RigidTransform.identity()
            for p in self.parts:
                out = out @ p.motion_at(t)
            return out
        raise ValueError("linear-interp trajectories are absolute; use pose_at")

    def pose_at(self, base: RigidTransform, t: float) -> RigidTransform:
        """World-to-camera pose at exposure time ``t`` for the world-to-camera ``base``."""
        if self.kind == "linear-interp":
            a = RigidTransform.from_matrix(np.asarray(self.start, float).reshape(4, 4)).inverse()
            b = RigidTransform.from_matrix(np.asarray(self.end, float).reshape(4, 4)).inverse()
            return lg.interpolate(a, b, t).inverse()
        return (base.inverse() @ self.motion_at(t)).inverse()

    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_sub)

    def sub_poses(self, base: RigidTransform) -> list[RigidTransform]:
        return [self.pose_at(base, float(t)) for t in self.times()]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["parts"] = [p.to_dict() for p in self.parts]
        if self.start is None:
            d.pop("start")
        if self.end is None:
            d.pop("end")
        return d


def synthesize_blur(scene: GaussianScene, base: RigidTransform, intr: Intrinsics, traj: TrajectorySpec):
    """Average the sub-frame renders in linear RGB.

    Returns ``(blur, sharp, sub_poses)`` where ``sharp`` is the mid-exposure
    render. The mean is accumulated relative to the sharp frame, so a static
    trajectory reproduces it exactly.
    """
    sharp = render_numpy(scene, traj.pose_at(base, 0.5), intr)
    poses = traj.sub_poses(base)
    acc = np.zeros_like(sharp)
    for p in poses:
        acc += render_numpy(scene, p, intr) - sharp
    return sharp + acc / len(poses), sharp, poses


# -- dataset generation ---------------------------------------------------------
@dataclass
class GenerateConfig:
    scene_name: str = "toy"
    seed: int = 0
    n_gaussians: int = 200
    n_train: int = 10
    n_test: int = 3
    width: int = 96
    height: int = 96
    focal: float = 150.0
    distance: float = 2.5
    n_sub: int = 32
    blur: str = "screw"  # screw | linear-interp | composite | none
    max_angle: float = 0.1
    min_shift: float = 0.02
    max_shift: float = 0.05
    azimuth_range: float = 35.0
    elevation_range: float = 20.0
    point_noise: float = 0.01
    sh_degree: int = 0

    def __post_init__(self):
        if self.blur not in ("screw", "linear-interp", "composite", "none"):
            raise ValueError(f"generate.blur must be screw, linear-interp, composite or none, got {self.blur!r}")
        if min(self.n_gaussians, self.n_train, self.width, self.height) < 1 or self.n_test < 0:
            raise ValueError("generate: counts and image extents must be positive")
        if self.n_sub < 2:
            raise ValueError("generate.n_sub must be at least 2")
        if not 0.0 <= self.min_shift <= self.max_shift:
            raise ValueError("generate: need 0 <= min_shift <= max_shift")


def _camera(cfg: GenerateConfig, azim_deg: float, elev_deg: float) -> RigidTransform:
    a, e = np.radians(azim_deg), np.radians(elev_deg)
    eye = cfg.distance * np.array([np.sin(a) * np.cos(e), -np.sin(e), -np.cos(a) * np.cos(e)])
    return lg.look_at(eye, np.zeros(3), up=(0.0, -1.0, 0.0))


def _random_trajectory(cfg: GenerateConfig, rng: np.random.Generator, base: RigidTransform) -> TrajectorySpec:
    def screw() -> TrajectorySpec:
        # shake is mostly pitch and yaw; damp roll about the optical axis
        axis = rng.normal(size=3) * np.array([1.0, 1.0, 0.3])
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(0.5, 1.0) * cfg.max_angle
        # lateral direction in the image plane (camera frame)
        phi = rng.uniform(0.0, 2 * np.pi)
        lateral = np.array([np.cos(phi), np.sin(phi), 0.0])
        shift = rng.uniform(cfg.min_shift, cfg.max_shift)
        # translation after a screw of angle a is roughly a * v
        return TrajectorySpec("screw", axis.tolist(), float(angle), (lateral * shift / angle).tolist(), n_sub=cfg.n_sub)

    if cfg.blur == "none":
        return TrajectorySpec("screw", [0.0, 0.0, 0.0], 0.0, [0.0, 0.0, 0.0], n_sub=cfg.n_sub)
    if cfg.blur == "screw":
        return screw()
    if cfg.blur == "composite":
        parts = [screw(), screw()]
        for p in parts:
            p.angle *= 0.6
        return TrajectorySpec("composite", parts=parts, n_sub=cfg.n_sub)
    if cfg.blur == "linear-interp":
        s = screw()
        a = s.pose_at(base, 0.0)
        b = s.pose_at(base, 1.0)
        return TrajectorySpec("linear-interp", start=a.matrix().ravel().tolist(), end=b.matrix().ravel().tolist(), n_sub=cfg.n_sub)
    raise ValueError(f"unknown blur kind {cfg.blur!r}")


def _view_angles(n: int, cfg: GenerateConfig, rng: np.random.Generator, offset: float) -> list[tuple[float, float]]:
    out = []
    for i in range(n):
        frac = (i + offset) / max(n, 1)
        azim = (2 * frac - 1) * cfg.azimuth_range
        elev = rng.uniform(-1, 1) * cfg.elevation_range
        out.append((azim, elev))
    return out


def pose_to_text(t: RigidTransform) -> str:
    return " ".join(f"{v:.17g}" for v in t.matrix().ravel())


def pose_from_text(text: str, where: str = "pose") -> RigidTransform:
    try:
        vals = np.array([float(v) for v in str(text).split()])
    except ValueError:
        raise DataError(f"{where}: pose is not a list of numbers") from None
    if vals.size != 16:
        raise DataError(f"{where}: pose needs 16 values, got {vals.size}")
    m = vals.reshape(4, 4)
    t = RigidTransform.from_matrix(m)
    ortho, det = t.residuals()
    if max(ortho, det) > POSE_TOL or np.abs(m[3] - [0, 0, 0, 1]).max() > POSE_TOL:
        raise DataError(f"{where}: matrix is not a rigid transform (residual {max(ortho, det):.2e})")
    return t


def generate_dataset(out_dir, cfg: GenerateConfig | None = None) -> Path:
    """Render a blurry training set and sharp held-out views; returns the manifest path."""
    cfg = cfg or GenerateConfig()
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    scene = make_toy_scene(cfg.seed, cfg.n_gaussians, cfg.sh_degree)
    intr = Intrinsics.centered(cfg.focal, cfg.width, cfg.height)

    train = []
    for i, (az, el) in enumerate(_view_angles(cfg.n_train, cfg, rng, 0.5)):
        base = _camera(cfg, az, el)
        traj = _random_trajectory(cfg, rng, base)
        mid = traj.pose_at(base, 0.5)
        blur, sharp, _ = synthesize_blur(scene, base, intr, traj)
        stem = f"images/train_{i:03d}"
        for suffix, img in (("blur", blur), ("sharp", sharp)):
            save_png(out / f"{stem}_{suffix}.png", img)
            save_float(out / f"{stem}_{suffix}.f32", img)
        train.append(
            {
                "index": i,
                "blur": f"{stem}_blur.png",
                "sharp": f"{stem}_sharp.png",
                "pose": pose_to_text(mid),
                "time_span": [0.0, 1.0],
                "trajectory": traj.to_dict(),
            }
        )
    test = []
    for i, (az, el) in enumerate(_view_angles(cfg.n_test, cfg, rng, 0.0)):
        pose = _camera(cfg, az, el)
        sharp = render_numpy(scene, pose, intr)
        stem = f"images/test_{i:03d}"
        save_png(out / f"{stem}_sharp.png", sharp)
        save_float(out / f"{stem}_sharp.f32", sharp)
        test.append({"index": i, "sharp": f"{stem}_sharp.png", "pose": pose_to_text(pose)})

    pts = scene.means.data + rng.normal(scale=cfg.point_noise, size=scene.means.shape)
    cols = np.clip(scene.colors_rgb() + rng.normal(scale=0.05, size=(scene.n, 3)), 0.0, 1.0)
    np.savetxt(out / "points.txt", np.hstack([pts, cols]), fmt="%.9g", header="x y z r g b")
    np.savez(out / "gt_scene.npz", **scene.state(), background=scene.background)

    manifest = {
        "scene": cfg.scene_name,
        "intrinsics": intr.as_dict(),
        "background": [float(v) for v in scene.background],
        "points": "points.txt",
        "generator": asdict(cfg),
        "train": train,
        "test": test,
    }
    path = out / MANIFEST_NAME
    with open(path, "w") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=False)
    return path


# -- loading -------------------------------------------------------------
@dataclass
class TrainRecord:
    index: int
    base: RigidTransform
    blur: np.ndarray
    sharp: np.ndarray | None
    trajectory: TrajectorySpec | None
    time_span: tuple[float, float] = (0.0, 1.0)


@dataclass
class TestView:
    index: int
    pose: RigidTransform
    sharp: np.ndarray


@dataclass
class Dataset:
    name: str
    root: Path
    intrinsics: Intrinsics
    background: np.ndarray
    train: list[TrainRecord]
    test: list[TestView]
    points: np.ndarray | None = None  # (P, 6): xyz rgb


def _read_image(root: Path, rel: str) -> np.ndarray:
    png = root / rel
    side = png.with_suffix(".f32")
    if side.exists():
        return load_float(side)
    if not png.exists():
        raise DataError(f"missing image file: {png}")
    return load_png(png)


def load_dataset(manifest_path) -> Dataset:
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    if not manifest_path.exists():
        raise DataError(f"manifest not found: {manifest_path}")
    root = manifest_path.parent
    try:
        m = yaml.safe_load(manifest_path.read_text())
        intr = Intrinsics(**m["intrinsics"])
    except (yaml.YAMLError, KeyError, TypeError) as exc:
        raise DataError(f"{manifest_path}: malformed manifest ({exc})") from None
    train = []
    for rec in m.get("train", []):
        where = f"{manifest_path}: train[{rec.get('index')}]"
        traj = rec.get("trajectory")
        train.append(
            TrainRecord(
                index=int(rec["index"]),
                base=pose_from_text(rec["pose"], where),
                blur=_read_image(root, rec["blur"]),
                sharp=_read_image(root, rec["sharp"]) if rec.get("sharp") else None,
                trajectory=TrajectorySpec(**traj) if traj else None,
                time_span=tuple(rec.get("time_span", (0.0, 1.0))),
            )
        )
    test = [
        TestView(int(rec["index"]), pose_from_text(rec["pose"], f"{manifest_path}: test[{rec.get('index')}]"), _read_image(root, rec["sharp"]))
        for rec in m.get("test", [])
    ]
    points = None
    if m.get("points"):
        ppath = root / m["points"]
        if not ppath.exists():
            raise DataError(f"missing point file: {ppath}")
        points = np.loadtxt(ppath, ndmin=2)
    return Dataset(
        name=str(m.get("scene", "scene")),
        root=root,
        intrinsics=intr,
        background=np.asarray(m.get("background", [0.0, 0.0, 0.0]), dtype=float),
        train=train,
        test=test,
        points=points,
    )


def save_dataset(ds: Dataset, out_dir) -> Path:
    """Write an in-memory dataset (images, poses, points) to ``out_dir``."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for rec in ds.train:
        stem = f"images/train_{rec.index:03d}"
        entry = {"index": rec.index, "blur": f"{stem}_blur.png", "pose": pose_to_text(rec.base), "time_span": list(rec.time_span)}
        save_png(out / entry["blur"], rec.blur)
        save_float(out / f"{stem}_blur.f32", rec.blur)
        if rec.sharp is not None:
            entry["sharp"] = f"{stem}_sharp.png"
            save_png(out / entry["sharp"], rec.sharp)
            save_float(out / f"{stem}_sharp.f32", rec.sharp)
        if rec.trajectory is not None:
            entry["trajectory"] = rec.trajectory.to_dict()
        train.append(entry)
    for view in ds.test:
        stem = f"images/test_{view.index:03d}"
        save_png(out / f"{stem}_sharp.png", view.sharp)
        save_float(out / f"{stem}_sharp.f32", view.sharp)
        test.append({"index": view.index, "sharp": f"{stem}_sharp.png", "pose": pose_to_text(view.pose)})
    manifest = {
        "scene": ds.name,
        "intrinsics": ds.intrinsics.as_dict(),
        "background": [float(v) for v in ds.background],
        "train": train,
        "test": test,
    }
    if ds.points is not None:
        np.savetxt(out / "points.txt", ds.points, fmt="%.17g", header="x y z r g b")
        manifest["points"] = "points.txt"
    path = out / MANIFEST_NAME
    with open(path, "w") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=False)
    return path
