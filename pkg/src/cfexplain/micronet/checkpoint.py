"""Checkpoint format: magic, 4-byte header length, JSON header, raw weights.

The header declares architecture, seed, class names and the weight arrays
in order; the payload is their float64 little-endian bytes concatenated in
that declared order. Round-tripping is bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import ModelBundle

MAGIC = b"CFXNET01"


class CheckpointError(ValueError):
    pass


def save_model(model: ModelBundle, path) -> None:
    params = model.parameters()
    header = {
        "format": 1,
        "class_names": model.class_names,
        "input_shape": list(model.input_shape),
        "conv_widths": list(model.conv_widths),
        "tap_layer": model.tap_layer,
        "seed": model.seed,
        "weights": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for value in params.values():
            f.write(value.astype("<f8").tobytes(order="C"))


def load_model(path, expect_classes: int | None = None) -> ModelBundle:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) + 4 or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
    (header_len,) = struct.unpack_from("<I", blob, len(MAGIC))
    header_end = len(MAGIC) + 4 + header_len
    if len(blob) < header_end:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[len(MAGIC) + 4:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from None
    if header.get("format") != 1:
        raise CheckpointError(f"{path}: unsupported format {header.get('format')!r}")

    model = ModelBundle(
        header["class_names"],
        input_shape=tuple(header["input_shape"]),
        conv_widths=tuple(header["conv_widths"]),
        tap_layer=header["tap_layer"],
        seed=header["seed"],
    )
    if expect_classes is not None and model.num_classes != expect_classes:
        raise CheckpointError(
            f"{path}: checkpoint has {model.num_classes} classes, expected {expect_classes}")

    params = model.parameters()
    declared = [(entry["name"], tuple(entry["shape"])) for entry in header["weights"]]
    if [(k, v.shape) for k, v in params.items()] != declared:
        raise CheckpointError(f"{path}: weight table does not match architecture")

    offset = header_end
    for name, shape in declared:
        count = int(np.prod(shape))
        nbytes = count * 8
        chunk = blob[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated weights at {name}")
        params[name][...] = np.frombuffer(chunk, dtype="<f8").reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    return model
