"""Contrastive pretraining on view pairs with the temperature-scaled loss.

The encoder maps a (3, 512) window to a 96-dim representation h through
three valid-padding convolutions and global max pooling; a small dense head
maps h to the 50-dim projection z the loss operates on.  Downstream
consumers read h, the head is discarded after pretraining.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .augment import (DETERMINISTIC_KINDS, SIMCLR_PIPELINE, Pipeline, apply_input_prefix,
                      deterministic_prefix, view_pair_values)
from .nn import Conv1d, Dense, Dropout, GlobalMaxPool, Lars, Network, ReLU, cosine_lr
from .util import derive_rng, derive_seed_sequence

ENCODER_DIM = 96
RECEPTIVE_FIELD = 24 + (16 - 1) + (8 - 1)  # minimum input length


def build_encoder(rng: np.random.Generator, in_channels: int = 3,
                  dropout: float = 0.1) -> Network:
    """Three conv blocks (32/64/96 maps, kernels 24/16/8, stride 1) + max pool."""
    return Network([
        Conv1d(in_channels, 32, 24, 1, rng), ReLU(), Dropout(dropout),
        Conv1d(32, 64, 16, 1, rng), ReLU(), Dropout(dropout),
        Conv1d(64, 96, 8, 1, rng), Dropout(dropout),
        GlobalMaxPool(),
    ], input_kind="ncl")


def build_projection_head(rng: np.random.Generator,
                          widths: tuple[int, ...] = (258, 128, 50)) -> Network:
    layers = []
    previous = ENCODER_DIM
    for i, width in enumerate(widths):
        if i:
            layers.append(ReLU())
        layers.append(Dense(previous, width, rng))
        previous = width
    return Network(layers, input_kind="nd")


@dataclass
class SimclrModel:
    encoder: Network
    head: Network
    input_prefix: tuple[str, ...] = ()

    def params(self) -> dict[str, np.ndarray]:
        out = {f"encoder.{k}": v for k, v in self.encoder.params().items()}
        out.update({f"head.{k}": v for k, v in self.head.params().items()})
        return out

    def lars_exempt(self) -> set[str]:
        return ({f"encoder.{k}" for k in self.encoder.lars_exempt()}
                | {f"head.{k}" for k in self.head.lars_exempt()})


def build_model(seed: int, dropout: float = 0.1,
                head_widths: tuple[int, ...] = (258, 128, 50),
                input_prefix: tuple[str, ...] | None = None) -> SimclrModel:
    if input_prefix is None:
        input_prefix = deterministic_prefix(SIMCLR_PIPELINE)
    return SimclrModel(build_encoder(derive_rng(seed, "simclr-encoder-init"), dropout=dropout),
                       build_projection_head(derive_rng(seed, "simclr-head-init"), head_widths),
                       tuple(input_prefix))


def encode(model: SimclrModel, windows: np.ndarray) -> np.ndarray:
    """Dropout-free representations h, one row per window.

    ``model.input_prefix`` is applied first: training runs every view
    through those transforms, so the encoder has only ever seen windows
    in that form and raw windows would land off-distribution.
    """
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 3:
        raise ValueError(f"expected (batch, channels, length), got shape {windows.shape}")
    if windows.shape[2] < RECEPTIVE_FIELD:
        raise ValueError(
            f"window length {windows.shape[2]} shorter than receptive field {RECEPTIVE_FIELD}")
    return model.encoder.forward(apply_input_prefix(windows, model.input_prefix),
                                 training=False)


def _check_pairs(pairs: np.ndarray, n: int) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=int)
    if pairs.shape != (n,):
        raise ValueError(f"pairs must have shape ({n},), got {pairs.shape}")
    idx = np.arange(n)
    if np.any(pairs == idx) or np.any(pairs[pairs] != idx):
        raise ValueError("pairs must be a perfect matching without fixed points")
    return pairs


def _normalized(z: np.ndarray, norm_floor: float) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if norm_floor > 0.0:
        norms = np.maximum(norms, norm_floor)
    elif np.any(norms == 0.0):
        raise ValueError("zero-norm projection: cosine similarity undefined")
    return z / norms, norms


def _masked_log_softmax(zhat: np.ndarray, tau: float) -> np.ndarray:
    logits = (zhat @ zhat.T) / tau
    np.fill_diagonal(logits, -np.inf)
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def nt_xent(z: np.ndarray, pairs: np.ndarray, tau: float) -> float:
    """Temperature-scaled cross entropy over cosine similarities.

    ``pairs`` maps each of the 2N rows to its positive partner; every other
    row acts as a negative.  The mean is over all 2N ordered positives.
    Zero-norm rows are an error here; the training loop floors norms instead.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 4 or z.shape[0] % 2:
        raise ValueError(f"need an even batch of >= 4 projections, got shape {z.shape}")
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    pairs = _check_pairs(pairs, z.shape[0])
    zhat, _ = _normalized(z, 0.0)
    log_alpha = _masked_log_softmax(zhat, tau)
    n = z.shape[0]
    return float(-log_alpha[np.arange(n), pairs].mean())


def nt_xent_grad(z: np.ndarray, pairs: np.ndarray, tau: float,
                 norm_floor: float = 0.0) -> tuple[float, np.ndarray]:
    """Loss plus its gradient with respect to the raw projections."""
    z = np.asarray(z, dtype=np.float64)
    pairs = _check_pairs(pairs, z.shape[0])
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    zhat, norms = _normalized(z, norm_floor)
    log_alpha = _masked_log_softmax(zhat, tau)
    n = z.shape[0]
    rows = np.arange(n)
    loss = float(-log_alpha[rows, pairs].mean())
    g = np.exp(log_alpha)
    g[rows, pairs] -= 1.0
    g /= n * tau
    dzhat = (g + g.T) @ zhat
    dz = (dzhat - (dzhat * zhat).sum(axis=1, keepdims=True) * zhat) / norms
    return loss, dz


@dataclass
class SimclrTrainConfig:
    epochs: int = 50
    batch_size: int = 1024
    temperature: float = 0.5
    base_lr: float | None = None  # defaults to 0.3 * batch_size / 256
    pipeline: Pipeline = field(default_factory=lambda: SIMCLR_PIPELINE)
    dropout: float = 0.1
    head_widths: tuple[int, ...] = (258, 128, 50)
    norm_floor: float = 1e-12
    seed: int = 0

    def resolved_lr(self) -> float:
        return self.base_lr if self.base_lr is not None else 0.3 * self.batch_size / 256


def _spread_groups(order: np.ndarray, groups: np.ndarray, batch_size: int) -> np.ndarray:
    """Rebuild a shuffled order so same-group windows avoid sharing a batch.

    Deals groups out largest first, each member into the emptiest batch that
    does not hold the group yet; balancing the fill this way never strands a
    group that could still be spread.  A group with more members than there
    are batches overflows into the emptiest batch regardless.  The shuffled
    ``order`` fixes every tiebreak, so the result is deterministic in it.
    """
    n = order.size
    caps = [min(s + batch_size, n) - s for s in range(0, n, batch_size)]
    members: dict = {}
    for idx in order:
        members.setdefault(groups[idx], []).append(int(idx))
    batches: list[list[int]] = [[] for _ in caps]
    for g, idxs in sorted(members.items(), key=lambda kv: -len(kv[1])):
        for idx in idxs:
            free = [b for b in range(len(caps)) if len(batches[b]) < caps[b]]
            fits = [b for b in free if g not in (groups[i] for i in batches[b])] or free
            batches[min(fits, key=lambda b: len(batches[b]))].append(idx)
    return np.array([idx for batch in batches for idx in batch])


def train_simclr(windows: np.ndarray, config: SimclrTrainConfig,
                 step_hook=None, groups=None) -> tuple[SimclrModel, list[float]]:
    """Pretrain on unlabeled windows; returns the model and per-epoch mean loss.

    Every batch stacks the two views of its windows as [firsts; seconds], so
    row i pairs with row i + B.  Augmentation seeds derive from
    (run seed, epoch, window index) and are schedule-independent.  Batches
    that would hold fewer than two windows are dropped (no negatives).

    ``groups`` optionally tags each window with a source id (participant,
    say).  Windows from one source are near duplicates, and as negatives
    they get punished for agreeing; spreading them across batches keeps the
    loss a contrast between sources rather than within them.
    """
    windows = np.asarray(windows, dtype=np.float64)
    n = windows.shape[0]
    if n < 2:
        raise ValueError("need at least 2 windows for negatives")
    if config.batch_size < 2:
        raise ValueError("batch size must be >= 2")
    if groups is not None:
        groups = np.asarray(groups)
        if groups.shape != (n,):
            raise ValueError(f"groups must have shape ({n},), got {groups.shape}")
    config.pipeline.validate(windows.shape[2])

    model = build_model(config.seed, config.dropout, config.head_widths,
                        input_prefix=deterministic_prefix(config.pipeline))
    params = model.params()
    optimizer = Lars(params, exempt=model.lars_exempt())
    base_lr = config.resolved_lr()
    steps_per_epoch = sum(1 for s in range(0, n, config.batch_size) if n - s >= 2)
    total_steps = config.epochs * steps_per_epoch
    history = []
    step = 0
    for epoch in range(config.epochs):
        order = derive_rng(config.seed, "shuffle", epoch).permutation(n)
        if groups is not None:
            order = _spread_groups(order, groups, config.batch_size)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            batch_idx = order[start:start + config.batch_size]
            b = batch_idx.size
            if b < 2:
                continue
            firsts = np.empty((b,) + windows.shape[1:])
            seconds = np.empty_like(firsts)
            for row, idx in enumerate(batch_idx):
                seed = derive_seed_sequence(config.seed, "augment", epoch, int(idx))
                firsts[row], seconds[row] = view_pair_values(
                    windows[idx], config.pipeline, seed)
            batch = np.concatenate([firsts, seconds])
            pairs = np.concatenate([np.arange(b, 2 * b), np.arange(b)])

            drop_rng = derive_rng(config.seed, "dropout", epoch, step)
            h = model.encoder.forward(batch, training=True, rng=drop_rng)
            z = model.head.forward(h, training=True)
            loss, dz = nt_xent_grad(z, pairs, config.temperature, config.norm_floor)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite contrastive loss: {loss}")
            dh = model.head.backward(dz)
            model.encoder.backward(dh, skip_input_grad=True)

            grads = {f"encoder.{k}": v for k, v in model.encoder.grads().items()}
            grads.update({f"head.{k}": v for k, v in model.head.grads().items()})
            optimizer.step(grads, cosine_lr(step, total_steps, base_lr))
            epoch_losses.append(loss)
            step += 1
            if step_hook is not None:
                step_hook(step, model, loss)
        history.append(float(np.mean(epoch_losses)))
    return model, history
