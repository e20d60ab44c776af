"""End-to-end supervised baseline: the conv encoder with a softmax head.

Shares the convolutional trunk used for contrastive pretraining but trains
all weights directly on one task's labels with Adam.  Serves as the upper
reference line next to the frozen-representation probes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data.records import TASKS
from .nn.layers import Dense
from .nn.losses import softmax_cross_entropy
from .nn.network import Network
from .nn.optim import Adam, cosine_lr
from .simclr import ENCODER_DIM, build_encoder
from .util import derive_rng


@dataclass
class SupervisedConfig:
    task: str
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    dropout: float = 0.1
    cosine_schedule: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class SupervisedModel:
    network: Network
    task: str
    n_classes: int


def build_supervised(config: SupervisedConfig) -> SupervisedModel:
    rng = derive_rng(config.seed, "supervised-init")
    encoder = build_encoder(rng, dropout=config.dropout)
    head = Dense(ENCODER_DIM, TASKS[config.task], rng)
    network = Network(encoder.layers + [head], input_kind="ncl")
    return SupervisedModel(network, config.task, TASKS[config.task])


def predict_scores(model: SupervisedModel, windows: np.ndarray) -> np.ndarray:
    windows = np.asarray(windows, dtype=np.float64)
    return model.network.forward(windows, training=False)


def predict(model: SupervisedModel, windows: np.ndarray) -> np.ndarray:
    return np.argmax(predict_scores(model, windows), axis=1)


def train_supervised(windows: np.ndarray, labels: np.ndarray,
                     config: SupervisedConfig) -> tuple[SupervisedModel, list[float]]:
    """Train on labeled windows; returns the model and per-epoch mean loss."""
    windows = np.asarray(windows, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    n = windows.shape[0]
    if n < 1 or labels.shape != (n,):
        raise ValueError("windows and labels must align on the first axis")
    k = TASKS[config.task]
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels outside [0, {k}) for task {config.task!r}")

    model = build_supervised(config)
    optimizer = Adam(model.network.params())
    steps_per_epoch = sum(1 for s in range(0, n, config.batch_size)
                          if min(config.batch_size, n - s) >= 1)
    total_steps = config.epochs * steps_per_epoch
    history = []
    step = 0
    for epoch in range(config.epochs):
        order = derive_rng(config.seed, "supervised-shuffle", epoch).permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            batch_idx = order[start:start + config.batch_size]
            drop_rng = derive_rng(config.seed, "supervised-dropout", epoch, step)
            logits = model.network.forward(windows[batch_idx], training=True,
                                           rng=drop_rng)
            loss, dlogits = softmax_cross_entropy(logits, labels[batch_idx])
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite supervised loss: {loss}")
            model.network.backward(dlogits, skip_input_grad=True)
            lr = (cosine_lr(step, total_steps, config.learning_rate)
                  if config.cosine_schedule else config.learning_rate)
            optimizer.step(model.network.grads(), lr)
            epoch_losses.append(loss)
            step += 1
        history.append(float(np.mean(epoch_losses)))
    return model, history
