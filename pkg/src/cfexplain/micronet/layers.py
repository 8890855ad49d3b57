"""Numpy layers with explicit forward/backward passes.

All arrays are float64, layout (N, C, H, W). Layers hold their weights but
never cache activations on themselves: ``forward`` returns whatever the
matching ``backward`` needs, so one layer instance can serve concurrent
calls.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Conv2D:
    """3x3 convolution, stride 1, zero padding (spatial size preserved)."""

    def __init__(self, in_ch: int, out_ch: int, ksize: int = 3, rng: np.random.Generator | None = None):
        if ksize % 2 != 1:
            raise ValueError("kernel size must be odd")
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.ksize = ksize
        self.pad = ksize // 2
        rng = rng or np.random.default_rng(0)
        self.weight = he_normal(rng, (out_ch, in_ch, ksize, ksize), in_ch * ksize * ksize)
        self.bias = np.zeros(out_ch)

    def _im2col(self, x: np.ndarray):
        n, c, h, w = x.shape
        p, k = self.pad, self.ksize
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (N, C, H, W, k, k)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)
        return np.ascontiguousarray(cols)

    def forward(self, x: np.ndarray):
        n, c, h, w = x.shape
        cols = self._im2col(x)
        out = cols @ self.weight.reshape(self.out_ch, -1).T + self.bias
        out = out.reshape(n, h, w, self.out_ch).transpose(0, 3, 1, 2)
        return out, (cols, x.shape)

    def backward(self, dout: np.ndarray, cache):
        cols, x_shape = cache
        n, c, h, w = x_shape
        k, p = self.ksize, self.pad
        dout_r = dout.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        dweight = (dout_r.T @ cols).reshape(self.weight.shape)
        dbias = dout_r.sum(axis=0)
        dcols = dout_r @ self.weight.reshape(self.out_ch, -1)
        # scatter column gradients back; 9 shifted adds beat a scatter loop
        dcols6 = dcols.reshape(n, h, w, c, k, k).transpose(0, 3, 1, 2, 4, 5)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
        for di in range(k):
            for dj in range(k):
                dxp[:, :, di:di + h, dj:dj + w] += dcols6[:, :, :, :, di, dj]
        dx = dxp[:, :, p:p + h, p:p + w]
        return dx, {"weight": dweight, "bias": dbias}

    def input_grad(self, dout: np.ndarray, x_shape) -> np.ndarray:
        """Gradient w.r.t. the input only (no weight grads, no cached cols)."""
        n, c, h, w = x_shape
        k, p = self.ksize, self.pad
        dout_r = dout.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        dcols = dout_r @ self.weight.reshape(self.out_ch, -1)
        dcols6 = dcols.reshape(n, h, w, c, k, k).transpose(0, 3, 1, 2, 4, 5)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
        for di in range(k):
            for dj in range(k):
                dxp[:, :, di:di + h, dj:dj + w] += dcols6[:, :, :, :, di, dj]
        return dxp[:, :, p:p + h, p:p + w]


def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dout * mask


def maxpool2_forward(x: np.ndarray):
    """2x2 max pooling, stride 2; spatial dims must be even."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = win.reshape(n, c, h // 2, w // 2, 4)
    idx = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2_backward(dout: np.ndarray, cache) -> np.ndarray:
    idx, x_shape = cache
    n, c, h, w = x_shape
    dflat = np.zeros((n, c, h // 2, w // 2, 4))
    np.put_along_axis(dflat, idx[..., None], dout[..., None], axis=-1)
    dwin = dflat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return dwin.reshape(n, c, h, w)


def gap_forward(x: np.ndarray):
    """Global average pool over the spatial dims: (N,C,H,W) -> (N,C)."""
    return x.mean(axis=(2, 3)), x.shape


def gap_backward(dout: np.ndarray, x_shape) -> np.ndarray:
    n, c, h, w = x_shape
    return np.broadcast_to(dout[:, :, None, None], (n, c, h, w)) / (h * w)


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.weight = he_normal(rng, (out_dim, in_dim), in_dim)
        self.bias = np.zeros(out_dim)

    def forward(self, x: np.ndarray):
        return x @ self.weight.T + self.bias, x

    def backward(self, dout: np.ndarray, cache):
        x = cache
        dweight = dout.T @ x
        dbias = dout.sum(axis=0)
        dx = dout @ self.weight
        return dx, {"weight": dweight, "bias": dbias}


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
