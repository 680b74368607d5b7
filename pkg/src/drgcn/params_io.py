"""Binary artifact for trained parameters plus the recorded alpha trace.

Layout: magic "GCPB", u32 version, u64 JSON header length, UTF-8 JSON header,
then the tensor payloads (f64 little-endian, row-major) in header order:
trainable tensors, buffers, trace layer-means, optional trace best-alpha.
Writing the same state twice produces identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .data import DataError
from .model import ModelConfig, ModelParams
from .training import AlphaTrace

__all__ = ["save_params", "load_params"]

MAGIC = b"GCPB"
VERSION = 1


def save_params(path, cfg: ModelConfig, params: ModelParams,
                trace: AlphaTrace | None = None, extra: dict | None = None) -> None:
    header = {
        "model": asdict(cfg),
        "tensors": [{"name": name, "rows": params[name].rows,
                     "cols": params[name].cols,
                     "group": params.group_of(name)}
                    for name in params.names()],
        "buffers": [{"name": name, "rows": arr.shape[0], "cols": arr.shape[1]}
                    for name, arr in sorted(params.buffers.items())],
        "trace": None,
        "extra": extra or {},
    }
    if trace is not None:
        header["trace"] = {
            "layers": trace.layers, "nodes": trace.nodes,
            "epochs": list(trace.epochs),
            "has_best": trace.best_alpha is not None,
        }
    blob = bytearray(MAGIC)
    blob += struct.pack("<I", VERSION)
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    blob += struct.pack("<Q", len(head))
    blob += head
    for name in params.names():
        blob += params[name].data.astype("<f8").tobytes()
    for name, arr in sorted(params.buffers.items()):
        blob += arr.astype("<f8").tobytes()
    if trace is not None:
        blob += trace.means_matrix().astype("<f8").tobytes()
        if trace.best_alpha is not None:
            blob += trace.best_alpha.astype("<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_params(path):
    """Returns (ModelConfig, ModelParams, AlphaTrace | None, extra dict)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"params file not found: {path}")
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise DataError(f"{path.name}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise DataError(f"unsupported params version {version}")
    (hlen,) = struct.unpack_from("<Q", blob, 8)
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    offset = 16 + hlen

    def take(rows, cols):
        nonlocal offset
        count = rows * cols
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        return arr.reshape(rows, cols).copy()

    cfg = ModelConfig(**header["model"])
    params = ModelParams()
    for spec in header["tensors"]:
        params.add(spec["name"], Tensor(take(spec["rows"], spec["cols"]),
                                        requires_grad=True), spec["group"])
    for spec in header["buffers"]:
        params.buffers[spec["name"]] = take(spec["rows"], spec["cols"])

    trace = None
    if header["trace"] is not None:
        t = header["trace"]
        trace = AlphaTrace(layers=t["layers"], nodes=t["nodes"])
        means = take(len(t["epochs"]), t["layers"])
        trace.epochs = [int(e) for e in t["epochs"]]
        trace.layer_means = [means[i] for i in range(means.shape[0])]
        if t["has_best"]:
            trace.best_alpha = take(t["layers"], t["nodes"])
    if offset != len(blob):
        raise DataError(f"{path.name}: trailing bytes")
    return cfg, params, trace, header.get("extra", {})
