"""Small CNN classifier with a jointly trained hardness head.

Architecture (input 3x32x32 by default):

    conv3x3 -> relu -> maxpool2
    conv3x3 -> relu -> maxpool2
    conv3x3 -> relu            <- default tap layer ("conv3", 8x8 spatial)
    global average pool
    fc -> softmax              (classifier posteriors)
    fc -> sigmoid              (hardness s_hp, stop-gradient from the trunk)

Scalar explanation targets ("selectors") are functions of the outputs:
a class posterior, the softmax score max_y h_y, the certainty score
1 + (1/log C) * sum_y h_y log h_y, the easiness score 1 - s_hp, or a
constant (whose gradient is identically zero).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import (
    Conv2D,
    Linear,
    gap_backward,
    gap_forward,
    maxpool2_backward,
    maxpool2_forward,
    relu_backward,
    relu_forward,
    sigmoid,
    softmax,
)

TAP_LAYERS = ("conv1", "conv2", "conv3")
SELECTOR_KINDS = ("class", "softmax", "certainty", "easiness", "constant")


def parse_selector(target: str) -> tuple[str, int | None]:
    """Split a selector string into (kind, class index or None).

    Class posteriors are addressed as "class:<index>"; the remaining
    selectors are bare names.
    """
    if target.startswith("class:"):
        try:
            return "class", int(target.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad class selector {target!r}") from None
    if target in ("softmax", "certainty", "easiness", "constant"):
        return target, None
    raise ValueError(f"unknown selector {target!r}")


@dataclass
class ForwardState:
    """Per-call activation cache; the model itself stays read-only."""

    single: bool
    activations: dict[str, np.ndarray]
    caches: dict[str, object]
    posteriors: np.ndarray   # (N, C)
    hardness: np.ndarray     # (N,)

    def tap(self, name: str) -> np.ndarray:
        if name not in TAP_LAYERS:
            raise ValueError(f"unknown tap layer {name!r}")
        act = self.activations[name]
        return act[0] if self.single else act


class ModelBundle:
    """Classifier + hardness head with named activation taps."""

    def __init__(self, class_names, input_shape=(3, 32, 32), conv_widths=(8, 16, 32),
                 tap_layer="conv3", seed=0):
        if tap_layer not in TAP_LAYERS:
            raise ValueError(f"unknown tap layer {tap_layer!r}")
        self.class_names = list(class_names)
        if len(self.class_names) < 2:
            raise ValueError("need at least 2 classes")
        self.input_shape = tuple(input_shape)
        self.conv_widths = tuple(conv_widths)
        self.tap_layer = tap_layer
        self.seed = seed
        c_in, h, w = self.input_shape
        if h % 4 or w % 4:
            raise ValueError("input spatial dims must be divisible by 4")
        w1, w2, w3 = self.conv_widths
        rng = np.random.default_rng(seed)
        self.conv1 = Conv2D(c_in, w1, rng=rng)
        self.conv2 = Conv2D(w1, w2, rng=rng)
        self.conv3 = Conv2D(w2, w3, rng=rng)
        self.fc = Linear(w3, self.num_classes, rng=rng)
        self.hardness_fc = Linear(w3, 1, rng=rng)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def parameters(self) -> dict[str, np.ndarray]:
        """Named weight arrays in a fixed, documented order."""
        out = {}
        for name in ("conv1", "conv2", "conv3", "fc", "hardness_fc"):
            layer = getattr(self, name)
            out[f"{name}.weight"] = layer.weight
            out[f"{name}.bias"] = layer.bias
        return out

    # ---- forward ----------------------------------------------------

    def _as_batch(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
            single = True
        elif x.ndim == 4:
            single = False
        else:
            raise ValueError(f"expected (C,H,W) or (N,C,H,W), got shape {x.shape}")
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} != model input {self.input_shape}")
        return x, single

    def forward(self, x: np.ndarray) -> ForwardState:
        x, single = self._as_batch(x)
        acts, caches = {}, {}

        out, caches["conv1"] = self.conv1.forward(x - 0.5)  # center [0,1] inputs
        out, caches["relu1"] = relu_forward(out)
        acts["conv1"] = out
        out, caches["pool1"] = maxpool2_forward(out)

        out, caches["conv2"] = self.conv2.forward(out)
        out, caches["relu2"] = relu_forward(out)
        acts["conv2"] = out
        out, caches["pool2"] = maxpool2_forward(out)

        out, caches["conv3"] = self.conv3.forward(out)
        out, caches["relu3"] = relu_forward(out)
        acts["conv3"] = out

        pooled, caches["gap"] = gap_forward(out)
        acts["pooled"] = pooled
        logits, caches["fc"] = self.fc.forward(pooled)
        acts["logits"] = logits
        posteriors = softmax(logits)
        hp_logit, caches["hardness_fc"] = self.hardness_fc.forward(pooled)
        hardness = sigmoid(hp_logit[:, 0])
        return ForwardState(single, acts, caches, posteriors, hardness)

    def predict(self, x: np.ndarray):
        """Argmax class index; ties resolve to the lowest index."""
        state = self.forward(x)
        idx = np.argmax(state.posteriors, axis=1)
        return int(idx[0]) if state.single else idx

    # ---- scalar selectors --------------------------------------------

    def selector_value(self, state: ForwardState, target: str) -> np.ndarray:
        """Selector value per batch row."""
        kind, cls = parse_selector(target)
        h = state.posteriors
        if kind == "class":
            if not 0 <= cls < self.num_classes:
                raise ValueError(f"class index {cls} out of range")
            return h[:, cls]
        if kind == "softmax":
            return h.max(axis=1)
        if kind == "certainty":
            return certainty_score_rows(h)
        if kind == "easiness":
            return 1.0 - state.hardness
        return np.ones(h.shape[0])  # constant

    def _selector_grad_pooled(self, state: ForwardState, target: str) -> np.ndarray:
        """d(selector)/d(pooled features), shape (N, width)."""
        kind, cls = parse_selector(target)
        h = state.posteriors
        n, c = h.shape
        if kind == "constant":
            return np.zeros((n, self.conv_widths[2]))
        if kind == "easiness":
            # easiness = 1 - sigmoid(t); d/dt = -s(1-s), then through the fc
            s = state.hardness
            dt = (-s * (1.0 - s))[:, None]
            return dt * self.hardness_fc.weight[0][None, :]
        if kind == "class":
            if not 0 <= cls < self.num_classes:
                raise ValueError(f"class index {cls} out of range")
            picked = np.full(n, cls)
        elif kind == "softmax":
            picked = np.argmax(h, axis=1)
        if kind in ("class", "softmax"):
            # d h_p / d u_k = h_p (delta_pk - h_k)
            hp = h[np.arange(n), picked][:, None]
            du = -hp * h
            du[np.arange(n), picked] += hp[:, 0]
        else:  # certainty: d/d u_k = (h_k / log C)(log h_k + H(h))
            ent = entropy_rows(h)
            logh = np.where(h > 0, np.log(np.where(h > 0, h, 1.0)), 0.0)
            du = h * (logh + ent[:, None]) / np.log(c)
        return du @ self.fc.weight

    def grad_wrt_tap(self, x_or_state, target: str, tap_layer: str | None = None) -> np.ndarray:
        """Gradient of a scalar selector w.r.t. the tap activations.

        Treats the tap activation tensor as the variable: the chain runs
        from the selector back through the head and any intermediate
        layers, stopping at the tap output.
        """
        tap = tap_layer or self.tap_layer
        if tap not in TAP_LAYERS:
            raise ValueError(f"unknown tap layer {tap!r}")
        state = x_or_state if isinstance(x_or_state, ForwardState) else self.forward(x_or_state)
        dpooled = self._selector_grad_pooled(state, target)
        grad = gap_backward(dpooled, state.caches["gap"])
        n = state.posteriors.shape[0]
        _, h, w = self.input_shape
        w1, w2, _ = self.conv_widths
        if tap != "conv3":
            grad = relu_backward(grad, state.caches["relu3"])
            grad = self.conv3.input_grad(grad, (n, w2, h // 4, w // 4))
            grad = maxpool2_backward(grad, state.caches["pool2"])
            if tap != "conv2":
                grad = relu_backward(grad, state.caches["relu2"])
                grad = self.conv2.input_grad(grad, (n, w1, h // 2, w // 2))
                grad = maxpool2_backward(grad, state.caches["pool1"])
        return grad[0] if state.single else grad

    def selector_value_from_tap(self, tap_layer: str, tap_acts: np.ndarray, target: str) -> float:
        """Re-run the network from a (possibly perturbed) tap activation.

        Used by finite-difference checks; shares the forward layer code but
        none of the backward path.
        """
        if tap_layer not in TAP_LAYERS:
            raise ValueError(f"unknown tap layer {tap_layer!r}")
        out = np.asarray(tap_acts, dtype=np.float64)
        if out.ndim == 3:
            out = out[None]
        if tap_layer == "conv1":
            out, _ = maxpool2_forward(out)
            out, _ = self.conv2.forward(out)
            out, _ = relu_forward(out)
        if tap_layer in ("conv1", "conv2"):
            out, _ = maxpool2_forward(out)
            out, _ = self.conv3.forward(out)
            out, _ = relu_forward(out)
        pooled, _ = gap_forward(out)
        logits, _ = self.fc.forward(pooled)
        h = softmax(logits)
        hp_logit, _ = self.hardness_fc.forward(pooled)
        s_hp = sigmoid(hp_logit[:, 0])
        kind, cls = parse_selector(target)
        if kind == "class":
            return float(h[0, cls])
        if kind == "softmax":
            return float(h[0].max())
        if kind == "certainty":
            return float(certainty_score_rows(h)[0])
        if kind == "easiness":
            return float(1.0 - s_hp[0])
        return 1.0


def entropy_rows(h: np.ndarray) -> np.ndarray:
    """Shannon entropy per row with 0 log 0 := 0."""
    logh = np.where(h > 0, np.log(np.where(h > 0, h, 1.0)), 0.0)
    return -(h * logh).sum(axis=1)


def certainty_score_rows(h: np.ndarray) -> np.ndarray:
    c = h.shape[1]
    return 1.0 - entropy_rows(h) / np.log(c)
