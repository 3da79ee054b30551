"""Single-file training checkpoints.

Layout: the magic ``SBCK``, a uint32 format version, a uint64 header length,
a UTF-8 JSON header, then raw little-endian arrays in header order. The
header stores the run config, intrinsics, base poses, iteration counter and
an array table (name, dtype, shape, byte offset).
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"SBCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: dict
    config_hash: str
    iteration: int
    intrinsics: dict
    background: list
    base_poses: list  # 4x4 nested lists, one per training image
    scene: dict[str, np.ndarray]
    kernel: dict[str, np.ndarray]
    compositor: dict[str, np.ndarray]
    optimizer: dict[str, dict] = field(default_factory=dict)  # name -> {step, m, v}

    # -- serialisation ----------------------------------------------------
    def _arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, d in (("scene", self.scene), ("kernel", self.kernel), ("compositor", self.compositor)):
            for k, v in d.items():
                out[f"{prefix}/{k}"] = np.asarray(v)
        for k, st in self.optimizer.items():
            out[f"adam_m/{k}"] = np.asarray(st["m"])
            out[f"adam_v/{k}"] = np.asarray(st["v"])
        return out

    def save(self, path) -> None:
        path = Path(path)
        arrays = self._arrays()
        table, offset = [], 0
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            table.append({"name": name, "dtype": arr.dtype.newbyteorder("<").str, "shape": list(arr.shape), "offset": offset})
            offset += arr.nbytes
        header = {
            "config": self.config,
            "config_hash": self.config_hash,
            "iteration": self.iteration,
            "intrinsics": self.intrinsics,
            "background": list(map(float, self.background)),
            "base_poses": self.base_poses,
            "adam_steps": {k: int(st["step"]) for k, st in self.optimizer.items()},
            "arrays": table,
        }
        blob = json.dumps(header, sort_keys=True).encode()
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IQ", VERSION, len(blob)))
            fh.write(blob)
            for entry, arr in zip(table, arrays.values()):
                fh.write(np.ascontiguousarray(arr, dtype=entry["dtype"]).tobytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        if not path.exists():
            raise CheckpointError(f"checkpoint not found: {path}")
        data = path.read_bytes()
        if data[:4] != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic {data[:4]!r})")
        version, hlen = struct.unpack_from("<IQ", data, 4)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        start = 16
        try:
            header = json.loads(data[start : start + hlen].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header ({exc})") from None
        body = start + hlen
        groups: dict[str, dict] = {"scene": {}, "kernel": {}, "compositor": {}, "adam_m": {}, "adam_v": {}}
        for entry in header["arrays"]:
            dt = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            lo = body + entry["offset"]
            if lo + count * dt.itemsize > len(data):
                raise CheckpointError(f"{path}: truncated array {entry['name']!r}")
            arr = np.frombuffer(data, dtype=dt, count=count, offset=lo).reshape(entry["shape"]).copy()
            prefix, name = entry["name"].split("/", 1)
            groups[prefix][name] = arr.astype(dt.newbyteorder("="))
        optimizer = {
            k: {"step": header["adam_steps"][k], "m": groups["adam_m"][k], "v": groups["adam_v"][k]} for k in groups["adam_m"]
        }
        return cls(
            config=header["config"],
            config_hash=header["config_hash"],
            iteration=header["iteration"],
            intrinsics=header["intrinsics"],
            background=header["background"],
            base_poses=header["base_poses"],
            scene=groups["scene"],
            kernel=groups["kernel"],
            compositor=groups["compositor"],
            optimizer=optimizer,
        )
