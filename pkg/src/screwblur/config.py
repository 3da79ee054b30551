"""Run configuration: nested dataclasses read from YAML with flag overrides."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .losses import LossWeights
from .ode import SolverConfig
from .scenedata import GenerateConfig

MODES = {
    # mode: (use_rigid, use_deform, use_compositor)
    "full": (True, True, True),
    "rigid": (True, False, False),
    "rigid_pw": (True, False, True),
}


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    iterations: int = 4000
    n_poses: int = 9
    mode: str = "full"  # full | rigid | rigid_pw
    # None: 3000/40000 of the schedule
    compositor_start: int | None = None
    eval_interval: int = 500
    checkpoint_interval: int = 0
    seed: int = 0
    precision: str = "float64"  # float64 | float32
    position_lr_init: float = 1.6e-4
    position_lr_final: float = 1.6e-6
    opacity_lr: float = 0.05
    scale_lr: float = 5e-3
    rotation_lr: float = 1e-3
    color_lr: float = 2.5e-3
    kernel_lr_init: float = 1e-3
    kernel_lr_final: float = 1e-4
    compositor_lr_init: float = 1e-3
    compositor_lr_final: float = 1e-4
    clip_norm: float = 10.0
    init_opacity: float = 0.1
    theta_gain: float = 0.1
    time_input: bool = False
    deform_init: float = 1e-5
    # learning-rate multiplier for the deform branch (enc_d, g, dec_d) relative to the kernel rate
    deform_lr_scale: float = 1e-3
    freeze_deform_decoder: bool = False
    compositor_channels: int = 64

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("train.iterations must be positive")
        if self.n_poses < 2:
            raise ConfigError("train.n_poses must be at least 2")
        if self.mode not in MODES:
            raise ConfigError(f"train.mode must be one of {sorted(MODES)}, got {self.mode!r}")
        if self.precision not in ("float64", "float32"):
            raise ConfigError(f"train.precision must be float64 or float32, got {self.precision!r}")
        if self.compositor_start is not None and not 0 <= self.compositor_start < self.iterations:
            raise ConfigError("train.compositor_start must lie in [0, iterations)")
        if self.eval_interval < 1:
            raise ConfigError("train.eval_interval must be positive")

    @property
    def flags(self) -> tuple[bool, bool, bool]:
        return MODES[self.mode]

    def activation_iteration(self) -> int:
        if self.compositor_start is not None:
            return self.compositor_start
        return min(round(self.iterations * 3000 / 40000), self.iterations - 1)


@dataclass
class RenderConfig:
    backend: str = "auto"  # auto | compiled | python
    sh_degree: int = 0

    def __post_init__(self):
        if self.backend not in ("auto", "compiled", "python"):
            raise ConfigError(f"render.backend must be auto, compiled or python, got {self.backend!r}")
        if not 0 <= self.sh_degree <= 3:
            raise ConfigError("render.sh_degree must lie in [0, 3]")


@dataclass
class DataConfig:
    manifest: str = ""
    out_dir: str = "run"
    generate: GenerateConfig = field(default_factory=GenerateConfig)


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    render: RenderConfig = field(default_factory=RenderConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Stable hash of the training-relevant settings."""
        d = self.to_dict()
        d.pop("data", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _build(cls, values: dict, where: str):
    if not isinstance(values, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(values).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, val in values.items():
        default = getattr(cls(), name) if name in fields else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), val, f"{where}.{name}")
        else:
            kwargs[name] = val
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def from_dict(values: dict | None) -> RunConfig:
    return _build(RunConfig, values or {}, "config")


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        values = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    try:
        return from_dict(values)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def with_overrides(cfg: RunConfig, overrides: dict[str, object]) -> RunConfig:
    """Apply dotted-key overrides such as ``{"train.iterations": 10}``."""
    d = cfg.to_dict()
    for key, val in overrides.items():
        node = d
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = val
    return from_dict(d)


def dump_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
