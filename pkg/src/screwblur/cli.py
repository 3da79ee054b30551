"""``screwblur`` command line: generate, train, render, eval, traj, selftest.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from .checkpoint import Checkpoint, CheckpointError
from .config import ConfigError, RunConfig, dump_config, load_config, with_overrides
from .imageio import ImageFormatError, save_float, save_png
from .ode import IntegrationError
from .scenedata import DataError, generate_dataset, load_dataset, pose_from_text
from .trainer import Trainer, TrainingDiverged, evaluate, export_trajectory, restore

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration (flags override it)")
    p.add_argument("--seed", type=int, help="seed for every random draw (overrides config)")
    p.add_argument("--out", help="output directory or file")


def _training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iters", type=int, help="training iterations (train.iterations)")
    p.add_argument("--n-poses", type=int, help="poses per exposure N (train.n_poses)")
    p.add_argument("--solver", choices=("euler", "rk4", "dopri5"), help="ODE method (solver.method)")
    p.add_argument("--rtol", type=float, help="solver relative tolerance")
    p.add_argument("--atol", type=float, help="solver absolute tolerance")
    p.add_argument("--mode", choices=("full", "rigid", "rigid_pw"), help="ablation preset (train.mode)")
    p.add_argument("--precision", choices=("float64", "float32"), help="arithmetic precision")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="screwblur", description=__doc__.splitlines()[0], formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="render a synthetic blurry dataset", formatter_class=fmt)
    _common(p)
    p.add_argument("--n-gaussians", type=int, help="gaussians in the toy scene")
    p.add_argument("--blur", choices=("screw", "linear-interp", "composite", "none"), help="ground-truth motion kind")

    p = sub.add_parser("train", help="optimise scene, kernel and compositor", formatter_class=fmt)
    _common(p)
    _training_flags(p)
    p.add_argument("--manifest", help="dataset manifest (data.manifest)")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--quiet", action="store_true", default=False, help="no per-eval progress lines")

    p = sub.add_parser("render", help="sharp renders from a checkpoint", formatter_class=fmt)
    _common(p)
    p.add_argument("--checkpoint", required=True, help="trained checkpoint")
    p.add_argument("--manifest", help="take test-view poses from this manifest")
    p.add_argument("--poses", help="text file with one 16-value world-to-camera pose per line")
    p.add_argument("--with-kernel", action="store_true", default=False, help="also write sub-frames, weights and the composited blur")
    p.add_argument("--image", type=int, default=0, help="training image index for --with-kernel")

    p = sub.add_parser("eval", help="PSNR/SSIM of sharp renders on held-out views", formatter_class=fmt)
    _common(p)
    p.add_argument("--checkpoint", required=True, help="trained checkpoint")
    p.add_argument("--manifest", required=True, help="dataset manifest")
    p.add_argument("--split", choices=("test", "train"), default="test", help="views to evaluate")

    p = sub.add_parser("traj", help="export the continuous camera trajectory of one image", formatter_class=fmt)
    _common(p)
    p.add_argument("--checkpoint", required=True, help="trained checkpoint")
    p.add_argument("--image", type=int, default=0, help="training image index")
    p.add_argument("--n-poses", type=int, help="number of exposure samples (default: the trained N)")

    p = sub.add_parser("selftest", help="run the lie-group, ODE and gradient property checks", formatter_class=fmt)
    _common(p)
    return parser


# -- helpers --------------------------------------------------------------
def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    ov = {}
    if args.seed is not None:
        ov["train.seed"] = args.seed
        ov["data.generate.seed"] = args.seed
    mapping = {
        "iters": "train.iterations",
        "n_poses": "train.n_poses",
        "solver": "solver.method",
        "rtol": "solver.rtol",
        "atol": "solver.atol",
        "mode": "train.mode",
        "precision": "train.precision",
        "manifest": "data.manifest",
        "n_gaussians": "data.generate.n_gaussians",
        "blur": "data.generate.blur",
    }
    for attr, key in mapping.items():
        val = getattr(args, attr, None)
        if val is not None:
            ov[key] = val
    if args.out is not None:
        ov["data.out_dir"] = args.out
    return with_overrides(cfg, ov) if ov else cfg


def _out_dir(args, cfg: RunConfig | None = None) -> Path:
    out = Path(args.out if args.out else (cfg.data.out_dir if cfg else "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_table(table: dict, out=None) -> None:
    out = out or sys.stdout
    print(f"{'view':>6} {'psnr':>10} {'ssim':>8}", file=out)
    for row in table["views"]:
        print(f"{row['view']:>6} {row['psnr']:>10.4f} {row['ssim']:>8.5f}", file=out)
    print(f"{'mean':>6} {table['mean_psnr']:>10.4f} {table['mean_ssim']:>8.5f}", file=out)


# -- commands -------------------------------------------------------------
def cmd_generate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    path = generate_dataset(out, cfg.data.generate)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    if not cfg.data.manifest:
        raise UsageError("train needs a dataset: pass --manifest or set data.manifest")
    ds = load_dataset(cfg.data.manifest)
    out = _out_dir(args, cfg)
    ckpt_path = out / "checkpoint.sbck"
    if args.resume:
        trainer = Trainer(ds, checkpoint=Checkpoint.load(args.resume))
        cfg = trainer.cfg
    else:
        trainer = Trainer(ds, cfg)
    dump_config(cfg, out / "config.yaml")

    def progress(rec):
        if not args.quiet:
            print(
                f"iter {rec['iteration']:6d}  loss {rec['loss']:.5f}  train psnr {rec.get('train_psnr', float('nan')):.3f}"
                f"  test psnr {rec.get('test_psnr', float('nan')):.3f}",
                flush=True,
            )

    trainer.fit(out / "metrics.jsonl", ckpt_path, progress)
    print(f"wrote {ckpt_path}")
    return EXIT_OK


def _pose_list(args, models) -> list:
    if args.poses:
        path = Path(args.poses)
        if not path.exists():
            raise DataError(f"pose file not found: {path}")
        lines = [ln for ln in path.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
        return [pose_from_text(ln, f"{path}:{i + 1}") for i, ln in enumerate(lines)]
    if args.manifest:
        return [v.pose for v in load_dataset(args.manifest).test]
    return list(models.bases)


def cmd_render(args) -> int:
    from . import autodiff as ad
    from .splat import render_numpy

    models = restore(Checkpoint.load(args.checkpoint))
    out = _out_dir(args)
    for i, pose in enumerate(_pose_list(args, models)):
        img = render_numpy(models.scene, pose, models.intrinsics)
        save_png(out / f"sharp_{i:03d}.png", img)
        save_float(out / f"sharp_{i:03d}.f32", img)
    if args.with_kernel:
        if not 0 <= args.image < len(models.bases):
            raise UsageError(f"--image {args.image} out of range for {len(models.bases)} training images")
        with ad.no_grad():
            blurred, frames, weights, _ = models.blurred(args.image)
        for n, f in enumerate(frames):
            save_png(out / f"kernel_{args.image:03d}_sub_{n:02d}.png", f.data)
            w = weights.data[n]
            save_float(out / f"kernel_{args.image:03d}_weight_{n:02d}.f32", w)
            save_png(out / f"kernel_{args.image:03d}_weight_{n:02d}.png", np.clip(w * len(frames) / 2.0, 0.0, 1.0))
        save_png(out / f"kernel_{args.image:03d}_blur.png", blurred.data)
        save_float(out / f"kernel_{args.image:03d}_blur.f32", blurred.data)
    print(f"wrote renders to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    ds = load_dataset(args.manifest)
    if args.split == "test":
        views = [(v.pose, v.sharp) for v in ds.test]
    else:
        views = [(r.base, r.sharp) for r in ds.train if r.sharp is not None]
    table = evaluate(ckpt, views)
    _print_table(table)
    if args.out:
        path = Path(args.out)
        if path.suffix != ".json":
            path.mkdir(parents=True, exist_ok=True)
            path = path / f"eval_{args.split}.json"
        path.write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
        print(f"wrote {path}")
    return EXIT_OK


def cmd_traj(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    try:
        traj = export_trajectory(ckpt, args.image, args.n_poses)
    except IndexError as exc:
        raise UsageError(str(exc)) from None
    text = yaml.safe_dump({"image": args.image, "poses": traj}, sort_keys=False)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_all

    return EXIT_OK if run_all() else EXIT_NUMERIC


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "render": cmd_render,
    "eval": cmd_eval,
    "traj": cmd_traj,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    stage = args.command
    try:
        return COMMANDS[stage](args)
    except (UsageError, ConfigError) as exc:
        print(f"screwblur {stage}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, ImageFormatError, FileNotFoundError) as exc:
        print(f"screwblur {stage}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, IntegrationError, FloatingPointError) as exc:
        print(f"screwblur {stage}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
