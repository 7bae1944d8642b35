"""Versioned binary checkpoint container.

Layout: 8-byte magic, uint32 format version, uint32 header length, UTF-8
JSON header, then raw little-endian tensor blobs in header index order.
The header carries the model config, normalization stats, the mel
front-end settings and a name/shape/dtype/offset index per tensor.
Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from typing import Mapping

import numpy as np

from .audio import SpectrogramConfig
from .errors import ConfigError
from .model import ModelConfig

MAGIC = b"VABARKCK"
FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(
    path,
    params: Mapping[str, np.ndarray],
    cfg: ModelConfig,
    norm_stats: dict | None = None,
    spec_cfg: SpectrogramConfig | None = None,
    extra: dict | None = None,
) -> None:
    index = []
    offset = 0
    blobs = []
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name])
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise ConfigError(f"tensor {name} has unsupported dtype {dtype}")
        blob = arr.astype(_DTYPES[dtype]).tobytes()
        index.append({"name": name, "shape": list(arr.shape), "dtype": dtype,
                      "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)

    header = {
        "format_version": FORMAT_VERSION,
        "model_config": cfg.to_dict(),
        "norm_stats": norm_stats,
        "spectrogram_config": None if spec_cfg is None else {
            "n_mels": spec_cfg.n_mels, "hop": spec_cfg.hop, "n_fft": spec_cfg.n_fft,
            "target_duration": spec_cfg.target_duration, "sample_rate": spec_cfg.sample_rate,
        },
        "extra": extra or {},
        "tensors": index,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(hbytes)))
        fh.write(hbytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Returns (params, model_cfg, norm_stats, spec_cfg, extra)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", raw, 8)
    if version != FORMAT_VERSION:
        raise ConfigError(f"{path}: checkpoint format v{version}, expected v{FORMAT_VERSION}")
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    base = 16 + hlen

    params = {}
    for entry in header["tensors"]:
        start = base + entry["offset"]
        buf = raw[start:start + entry["nbytes"]]
        if len(buf) != entry["nbytes"]:
            raise ConfigError(f"{path}: truncated tensor {entry['name']}")
        arr = np.frombuffer(buf, dtype=_DTYPES[entry["dtype"]]).reshape(entry["shape"])
        params[entry["name"]] = arr.astype(entry["dtype"]).copy()

    cfg = ModelConfig.from_dict(header["model_config"])
    spec_cfg = None
    if header.get("spectrogram_config"):
        spec_cfg = SpectrogramConfig(**header["spectrogram_config"])
    return params, cfg, header.get("norm_stats"), spec_cfg, header.get("extra", {})
