"""Minibatch SGD training for the classifier and hardness head.

The classifier minimizes cross-entropy. The hardness head minimizes binary
cross-entropy against the indicator "this sample is currently misclassified",
with a stop-gradient at the pooled features so the hardness loss never
touches trunk or classifier weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor import Tensor
from .layers import gap_backward, maxpool2_backward, relu_backward
from .model import ModelBundle


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass
class LabeledDataset:
    images: Tensor          # (N, C, H, W)
    labels: np.ndarray      # (N,) int class indices
    split: str = "train"

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.images.shape[0]
        if n == 0 or self.labels.shape != (n,):
            raise ValueError("images and labels must be nonempty and aligned")

    def __len__(self):
        return self.images.shape[0]


@dataclass
class Hyperparams:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.06
    momentum: float = 0.9
    weight_decay: float = 1e-3
    hardness_learning_rate: float = 0.05


def train(dataset: LabeledDataset, hp: Hyperparams | None = None, seed: int = 0,
          class_names=None, conv_widths=(8, 16, 32), tap_layer="conv3",
          log=None) -> ModelBundle:
    """Train a fresh ModelBundle on ``dataset``; fully seeded and reproducible."""
    hp = hp or Hyperparams()
    labels = dataset.labels
    n_classes = int(labels.max()) + 1 if class_names is None else len(class_names)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("labels out of range for class count")
    names = list(class_names) if class_names is not None else [f"class_{i}" for i in range(n_classes)]
    images = dataset.images.data

    model = ModelBundle(names, input_shape=images.shape[1:], conv_widths=conv_widths,
                        tap_layer=tap_layer, seed=seed)
    rng = np.random.default_rng(seed + 1)
    n = len(dataset)
    velocity = {name: np.zeros_like(value) for name, value in model.parameters().items()}

    for epoch in range(hp.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, hp.batch_size):
            batch = order[start:start + hp.batch_size]
            loss = _sgd_step(model, images[batch], labels[batch], hp, velocity)
            epoch_loss += loss * len(batch)
        epoch_loss /= n
        if not np.isfinite(epoch_loss) or not all(
                np.all(np.isfinite(v)) for v in model.parameters().values()):
            raise TrainingDiverged(epoch)
        if log is not None:
            log(epoch, epoch_loss)
    return model


def _sgd_step(model: ModelBundle, x: np.ndarray, y: np.ndarray, hp: Hyperparams,
              velocity: dict[str, np.ndarray]) -> float:
    state = model.forward(x)
    h = state.posteriors
    nb = len(y)
    eps = 1e-12

    ce = -np.log(h[np.arange(nb), y] + eps).mean()

    # classifier path
    du = h.copy()
    du[np.arange(nb), y] -= 1.0
    du /= nb
    dpooled, fc_grads = model.fc.backward(du, state.caches["fc"])
    grad = gap_backward(dpooled, state.caches["gap"])
    grad = relu_backward(grad, state.caches["relu3"])
    grad, c3_grads = model.conv3.backward(grad, state.caches["conv3"])
    grad = maxpool2_backward(grad, state.caches["pool2"])
    grad = relu_backward(grad, state.caches["relu2"])
    grad, c2_grads = model.conv2.backward(grad, state.caches["conv2"])
    grad = maxpool2_backward(grad, state.caches["pool1"])
    grad = relu_backward(grad, state.caches["relu1"])
    _, c1_grads = model.conv1.backward(grad, state.caches["conv1"])

    # hardness head: BCE against the misclassification indicator, gradient
    # stops at the pooled features
    miss = (np.argmax(h, axis=1) != y).astype(np.float64)
    dt = (state.hardness - miss)[:, None] / nb
    _, hp_grads = model.hardness_fc.backward(dt, state.caches["hardness_fc"])

    for name, grads, lr in (("conv1", c1_grads, hp.learning_rate),
                            ("conv2", c2_grads, hp.learning_rate),
                            ("conv3", c3_grads, hp.learning_rate),
                            ("fc", fc_grads, hp.learning_rate),
                            ("hardness_fc", hp_grads, hp.hardness_learning_rate)):
        layer = getattr(model, name)
        for kind in ("weight", "bias"):
            grad = grads[kind]
            if kind == "weight" and hp.weight_decay:
                grad = grad + hp.weight_decay * getattr(layer, kind)
            vel = velocity[f"{name}.{kind}"]
            vel *= hp.momentum
            vel -= lr * grad
            getattr(layer, kind)[...] += vel
    return float(ce)


def accuracy(model: ModelBundle, dataset: LabeledDataset, batch_size: int = 128) -> float:
    images = dataset.images.data
    hits = 0
    for start in range(0, len(dataset), batch_size):
        pred = model.predict(images[start:start + batch_size])
        hits += int((pred == dataset.labels[start:start + batch_size]).sum())
    return hits / len(dataset)
