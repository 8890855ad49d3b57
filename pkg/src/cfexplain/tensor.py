"""Minimal dense float64 tensor used by the network and heatmap algebra.

Values are stored row-major in a numpy array; all public operations are
order-deterministic and reject non-finite results.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class Tensor:
    """Dense multi-dimensional array of float64, immutable by convention.

    Wraps a numpy array (row-major, C order). Callers must not mutate
    ``data`` after construction; every public op returns a new Tensor.
    """

    __slots__ = ("data",)

    def __init__(self, data, shape=None):
        arr = np.asarray(data, dtype=np.float64)
        if shape is not None:
            arr = arr.reshape(shape)
        if arr.size == 0:
            raise ValueError("tensor must be nonempty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite")
        self.data = np.ascontiguousarray(arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __repr__(self):
        return f"Tensor(shape={list(self.shape)})"

    def __eq__(self, other):
        return isinstance(other, Tensor) and np.array_equal(self.data, other.data)


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    """Cellwise product; shapes must match exactly (no broadcasting)."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return Tensor(a.data * b.data)


def reduce_max(a: Tensor) -> float:
    return float(np.max(a.data))


def reduce_sum(a: Tensor) -> float:
    return float(np.sum(a.data))


def argmax(a: Tensor) -> int:
    """Flat index of the maximum; ties resolve to the lowest index."""
    return int(np.argmax(a.flat))


def dot(a: Tensor, b: Tensor) -> float:
    """Inner product of two flat tensors of equal length."""
    fa, fb = a.flat, b.flat
    if fa.shape != fb.shape:
        raise ValueError(f"length mismatch: {fa.size} vs {fb.size}")
    return float(np.dot(fa, fb))


def save_tensor(t: Tensor, path) -> None:
    """Write little-endian float64 values to ``path`` plus a JSON sidecar.

    The sidecar lives at ``path`` + '.json' and records {"shape": [...]}.
    """
    path = Path(path)
    path.write_bytes(t.data.astype("<f8").tobytes(order="C"))
    sidecar = {"shape": list(t.shape)}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True))


def load_tensor(path) -> Tensor:
    path = Path(path)
    sidecar_path = Path(str(path) + ".json")
    if not sidecar_path.exists():
        raise ValueError(f"missing sidecar for {path}")
    sidecar = json.loads(sidecar_path.read_text())
    shape = tuple(int(s) for s in sidecar["shape"])
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    expected = int(np.prod(shape))
    if raw.size != expected:
        raise ValueError(f"{path}: expected {expected} values, found {raw.size}")
    return Tensor(raw.copy(), shape=shape)
