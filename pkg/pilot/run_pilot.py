"""Pilot run for the blur-roundtrip thresholds.

Usage: python pilot/run_pilot.py OUT_DIR [dotted.key=value ...]
Generates the toy dataset (if missing), trains, and writes metrics.jsonl,
summary.json and the final checkpoint into OUT_DIR.
"""
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from screwblur.config import RunConfig, with_overrides
from screwblur.losses import psnr
from screwblur.scenedata import MANIFEST_NAME, generate_dataset, load_dataset
from screwblur.trainer import Trainer


def main(argv):
    out = Path(argv[0])
    out.mkdir(parents=True, exist_ok=True)
    overrides = {}
    for item in argv[1:]:
        key, val = item.split("=", 1)
        overrides[key] = yaml.safe_load(val)
    cfg = with_overrides(RunConfig(), {"train.precision": "float32", **overrides})
    data_dir = out / "data"
    if not (data_dir / MANIFEST_NAME).exists():
        generate_dataset(data_dir, cfg.data.generate)
    ds = load_dataset(data_dir)
    t0 = time.time()

    def progress(rec):
        print(f"[{time.time() - t0:7.1f}s] it {rec['iteration']:5d} loss {rec['loss']:.4f} "
              f"train {rec['train_psnr']:.2f} test {rec.get('test_psnr', float('nan')):.2f} "
              f"angle {rec['rigid_angle_mean']:.4f} deform {rec['deform_ortho_max']:.2e}", flush=True)

    trainer = Trainer(ds, cfg)
    records = trainer.fit(out / "metrics.jsonl", out / "final.ckpt", progress)
    blur_psnr = float(np.mean([psnr(r.blur, r.sharp) for r in ds.train]))
    summary = {
        "overrides": overrides,
        "seconds": time.time() - t0,
        "blur_psnr": blur_psnr,
        "iter0_psnr": records[0]["train_psnr"],
        "final_psnr": records[-1]["train_psnr"],
        "final_test_psnr": records[-1].get("test_psnr"),
        "deform_ortho_max": records[-1]["deform_ortho_max"],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main(sys.argv[1:])
