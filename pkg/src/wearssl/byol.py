"""Online/target pretraining with an EMA target and a two-term regression loss.

The encoder is the front half of a dense autoencoder trained on flattened
windows rescaled into the unit interval (the reconstruction output is a
Sigmoid).  The online branch adds a batchnormed projector and a single
linear predictor; the target branch mirrors encoder + projector and follows
the online parameters by exponential moving average, never by gradient.

The view pipeline opens with a deterministic negate, so the canonical
encoder input is the negated window: fit_rescaler takes its per-channel
range over negated train windows and encode() negates before rescaling.
Anything else either clips the bulk of the signal to an interval edge or
hands the encoder inputs it never saw during pretraining.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .augment import (BYOL_PIPELINE, Pipeline, apply_input_prefix, deterministic_prefix,
                      view_pair_values)
from .nn import Adam, BatchNorm1d, Dense, Lars, Network, ReLU, Sigmoid, cosine_lr, mse
from .util import derive_rng, derive_seed_sequence

ENCODER_WIDTHS = (1024, 512, 256, 128)
ENCODER_DIM = ENCODER_WIDTHS[-1]


class MinMaxRescaler:
    """Per-channel min-max map into [0, 1], fit on train-split windows only.

    transform clips, so augmented views that overshoot the train range are
    pinned to the interval the reconstruction Sigmoid can reach.
    """

    def __init__(self, low: np.ndarray, high: np.ndarray):
        self.low = low.reshape(-1, 1)
        span = (high - low).reshape(-1, 1)
        self.span = np.maximum(span, 1e-8)

    @classmethod
    def fit(cls, windows: np.ndarray) -> "MinMaxRescaler":
        if windows.ndim != 3:
            raise ValueError(f"expected (n, channels, length) windows, got {windows.shape}")
        return cls(windows.min(axis=(0, 2)), windows.max(axis=(0, 2)))

    def transform(self, values: np.ndarray) -> np.ndarray:
        scaled = (values - self.low) / self.span
        return np.clip(scaled, 0.0, 1.0)

    def state(self) -> dict[str, np.ndarray]:
        return {"low": self.low.ravel().copy(), "high": (self.low + self.span).ravel().copy()}

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> "MinMaxRescaler":
        return cls(np.asarray(state["low"], dtype=np.float64),
                   np.asarray(state["high"], dtype=np.float64))


def flatten_windows(windows: np.ndarray, rescaler: MinMaxRescaler,
                    prefix: tuple[str, ...] = ()) -> np.ndarray:
    """(n, C, L) z-scored windows -> (n, C*L) rows in [0, 1].

    ``prefix`` is the deterministic head of the view pipeline; it must be
    applied before rescaling so the rows match what training views look
    like (see fit_rescaler).
    """
    windows = apply_input_prefix(np.asarray(windows, dtype=np.float64), prefix)
    return rescaler.transform(windows).reshape(windows.shape[0], -1)


def fit_rescaler(windows: np.ndarray, pipe: Pipeline = BYOL_PIPELINE) -> MinMaxRescaler:
    """Fit the unit-interval map on train windows as the pipeline presents them.

    The pipeline's deterministic prefix hits every view, so the range must
    be taken over the prefix image of the train windows.  Fitting on the
    raw windows instead would clip the bulk of the (negated) signal to the
    interval edge and feed the encoder flattened views.
    """
    windows = np.asarray(windows, dtype=np.float64)
    return MinMaxRescaler.fit(apply_input_prefix(windows, deterministic_prefix(pipe)))


def build_autoencoder(input_dim: int, rng: np.random.Generator,
                      widths: tuple[int, ...] = ENCODER_WIDTHS) -> Network:
    """Eight dense layers: four encoding, four mirrored decoding, Sigmoid out."""
    layers = []
    previous = input_dim
    for width in widths:
        layers += [Dense(previous, width, rng), ReLU()]
        previous = width
    for width in list(widths[-2::-1]) + [input_dim]:
        layers += [Dense(previous, width, rng), ReLU()]
        previous = width
    layers[-1] = Sigmoid()  # reconstruction lives in [0, 1]
    return Network(layers, input_kind="nd")


def encoder_from_autoencoder(ae: Network, n_encode_layers: int = len(ENCODER_WIDTHS)) -> Network:
    """The encoding half (dense + relu blocks), sharing the trained arrays."""
    return Network(ae.layers[:2 * n_encode_layers], input_kind="nd")


def build_projector(rng: np.random.Generator, in_dim: int = ENCODER_DIM,
                    hidden_dim: int = 4096, out_dim: int = 256) -> Network:
    return Network([Dense(in_dim, hidden_dim, rng), BatchNorm1d(hidden_dim), ReLU(),
                    Dense(hidden_dim, out_dim, rng)], input_kind="nd")


def build_predictor(rng: np.random.Generator, dim: int = 256) -> Network:
    # a single linear map within the projection space
    return Network([Dense(dim, dim, rng)], input_kind="nd")


@dataclass
class ByolModel:
    online_encoder: Network
    online_projector: Network
    predictor: Network
    target_encoder: Network
    target_projector: Network
    beta: float = 0.99
    input_prefix: tuple[str, ...] = ()

    def online_params(self) -> dict[str, np.ndarray]:
        out = {f"encoder.{k}": v for k, v in self.online_encoder.params().items()}
        out.update({f"projector.{k}": v for k, v in self.online_projector.params().items()})
        out.update({f"predictor.{k}": v for k, v in self.predictor.params().items()})
        return out

    def ema_tracked_online(self) -> dict[str, np.ndarray]:
        """Online parameters the target mirrors (no predictor on the target)."""
        out = {f"encoder.{k}": v for k, v in self.online_encoder.params().items()}
        out.update({f"projector.{k}": v for k, v in self.online_projector.params().items()})
        return out

    def target_params(self) -> dict[str, np.ndarray]:
        out = {f"encoder.{k}": v for k, v in self.target_encoder.params().items()}
        out.update({f"projector.{k}": v for k, v in self.target_projector.params().items()})
        return out

    def lars_exempt(self) -> set[str]:
        return ({f"encoder.{k}" for k in self.online_encoder.lars_exempt()}
                | {f"projector.{k}" for k in self.online_projector.lars_exempt()}
                | {f"predictor.{k}" for k in self.predictor.lars_exempt()})


def byol_loss(p_v: np.ndarray, t_vp: np.ndarray, p_vp: np.ndarray, t_v: np.ndarray,
              normalize: bool = True) -> float:
    """Sum of the two cross-view regression terms, mean over the batch.

    Each term is the mean over coordinates of the squared difference between
    the (by default L2-normalized) prediction and its stop-gradient target.
    """
    loss, _, _ = byol_loss_grad(p_v, t_vp, p_vp, t_v, normalize)
    return loss


def _unit_rows(m: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError(f"zero-norm {what} vector")
    return m / norms, norms


def _term_grad(p: np.ndarray, t: np.ndarray, normalize: bool) -> tuple[np.ndarray, np.ndarray]:
    """Per-row term values and gradient with respect to p."""
    d = p.shape[1]
    if normalize:
        phat, norms = _unit_rows(p, "prediction")
        that, _ = _unit_rows(t, "target")
        diff = phat - that
        term = (diff * diff).sum(axis=1) / d
        g_hat = 2.0 * diff / d
        grad = (g_hat - (g_hat * phat).sum(axis=1, keepdims=True) * phat) / norms
        return term, grad
    diff = p - t
    return (diff * diff).sum(axis=1) / d, 2.0 * diff / d


def byol_loss_grad(p_v, t_vp, p_vp, t_v, normalize: bool = True
                   ) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus gradients w.r.t. the two online predictions (targets are constants)."""
    mats = [np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in (p_v, t_vp, p_vp, t_v)]
    p_v, t_vp, p_vp, t_v = mats
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise ValueError(f"all four inputs must share a shape, got {sorted(shapes)}")
    b = p_v.shape[0]
    term1, dp_v = _term_grad(p_v, t_vp, normalize)
    term2, dp_vp = _term_grad(p_vp, t_v, normalize)
    loss = float((term1 + term2).mean())
    return loss, dp_v / b, dp_vp / b


def ema_update(target_params: dict[str, np.ndarray], online_params: dict[str, np.ndarray],
               beta: float) -> None:
    """In-place xi <- beta * xi + (1 - beta) * theta; no gradient path exists here."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    for name, target in target_params.items():
        online = online_params[name]
        if online.shape != target.shape:
            raise ValueError(f"shape mismatch for {name!r}: {target.shape} vs {online.shape}")
        target *= beta
        target += (1.0 - beta) * online


@dataclass
class AutoencoderConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    widths: tuple[int, ...] = ENCODER_WIDTHS
    seed: int = 0


def pretrain_autoencoder(inputs: np.ndarray, config: AutoencoderConfig
                         ) -> tuple[Network, Network, list[float]]:
    """Reconstruction pretraining on rows already rescaled into [0, 1].

    Returns (encoder half, full autoencoder, per-epoch mean MSE).  The
    encoder shares its arrays with the autoencoder.  With 0 epochs the
    random initialization is returned untouched.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2:
        raise ValueError(f"expected flattened (n, features) inputs, got {inputs.shape}")
    if inputs.min() < 0.0 or inputs.max() > 1.0:
        raise ValueError("autoencoder inputs must lie in [0, 1] after rescaling")
    ae = build_autoencoder(inputs.shape[1], derive_rng(config.seed, "autoencoder-init"),
                           config.widths)
    optimizer = Adam(ae.params())
    n = inputs.shape[0]
    history = []
    for epoch in range(config.epochs):
        order = derive_rng(config.seed, "ae-shuffle", epoch).permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            batch = inputs[order[start:start + config.batch_size]]
            loss, _ = ae.loss_gradients(batch, lambda y: mse(y, batch), skip_input_grad=True)
            optimizer.step(ae.grads(), config.lr)
            epoch_losses.append(loss)
        history.append(float(np.mean(epoch_losses)))
    return encoder_from_autoencoder(ae, len(config.widths)), ae, history


@dataclass
class ByolTrainConfig:
    epochs: int = 50
    batch_size: int = 1024
    base_lr: float | None = None  # defaults to 0.2 * batch_size / 256
    beta: float = 0.99
    pipeline: Pipeline = field(default_factory=lambda: BYOL_PIPELINE)
    optimizer: str = "adam"  # "lars" restores the schedule-only reading
    normalize_loss: bool = True  # False = literal unnormalized squared error
    projection_dim: int = 256
    hidden_dim: int = 4096
    widths: tuple[int, ...] = ENCODER_WIDTHS
    seed: int = 0

    def resolved_lr(self) -> float:
        return self.base_lr if self.base_lr is not None else 0.2 * self.batch_size / 256


def build_byol_model(input_dim: int, config: ByolTrainConfig,
                     encoder_init: Network | None = None) -> ByolModel:
    """Online nets (encoder from ``encoder_init`` or fresh), target = deep copy."""
    if encoder_init is None:
        ae = build_autoencoder(input_dim, derive_rng(config.seed, "autoencoder-init"),
                               config.widths)
        encoder = encoder_from_autoencoder(ae, len(config.widths))
    else:
        encoder = encoder_init
    projector = build_projector(derive_rng(config.seed, "projector-init"),
                                config.widths[-1], config.hidden_dim, config.projection_dim)
    predictor = build_predictor(derive_rng(config.seed, "predictor-init"),
                                config.projection_dim)
    return ByolModel(encoder, projector, predictor,
                     encoder.copy(), projector.copy(), config.beta,
                     deterministic_prefix(config.pipeline))


def train_byol(windows: np.ndarray, rescaler: MinMaxRescaler, config: ByolTrainConfig,
               encoder_init: Network | None = None,
               step_hook=None) -> tuple[ByolModel, list[float]]:
    """Pretrain on unlabeled windows; returns the model and per-epoch mean loss.

    Each step draws a view pair per window (seeded by run seed, epoch, and
    window index), rescales the views into [0, 1], runs both through online
    and target branches in one stacked batch, steps the configured optimizer
    on the online parameters, then moves the target by EMA.
    """
    windows = np.asarray(windows, dtype=np.float64)
    n = windows.shape[0]
    if n < 1:
        raise ValueError("need at least one window")
    config.pipeline.validate(windows.shape[2])
    input_dim = windows.shape[1] * windows.shape[2]

    model = build_byol_model(input_dim, config, encoder_init)
    params = model.online_params()
    if config.optimizer == "adam":
        optimizer = Adam(params)
    elif config.optimizer == "lars":
        optimizer = Lars(params, exempt=model.lars_exempt())
    else:
        raise ValueError(f"unknown optimizer {config.optimizer!r}")
    base_lr = config.resolved_lr()
    steps_per_epoch = (n + config.batch_size - 1) // config.batch_size
    total_steps = config.epochs * steps_per_epoch
    target_params = model.target_params()
    tracked = model.ema_tracked_online()
    history = []
    step = 0
    for epoch in range(config.epochs):
        order = derive_rng(config.seed, "byol-shuffle", epoch).permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            batch_idx = order[start:start + config.batch_size]
            b = batch_idx.size
            views = np.empty((2 * b, input_dim))
            for row, idx in enumerate(batch_idx):
                seed = derive_seed_sequence(config.seed, "byol-augment", epoch, int(idx))
                v, vp = view_pair_values(windows[idx], config.pipeline, seed)
                views[row] = rescaler.transform(v).ravel()
                views[b + row] = rescaler.transform(vp).ravel()

            h = model.online_encoder.forward(views, training=True)
            z = model.online_projector.forward(h, training=True)
            p = model.predictor.forward(z, training=True)
            th = model.target_encoder.forward(views, training=True)
            tz = model.target_projector.forward(th, training=True)

            loss, dp_v, dp_vp = byol_loss_grad(p[:b], tz[b:], p[b:], tz[:b],
                                               config.normalize_loss)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite regression loss: {loss}")
            dz = model.predictor.backward(np.concatenate([dp_v, dp_vp]))
            dh = model.online_projector.backward(dz)
            model.online_encoder.backward(dh, skip_input_grad=True)

            grads = {f"encoder.{k}": v for k, v in model.online_encoder.grads().items()}
            grads.update({f"projector.{k}": v for k, v in model.online_projector.grads().items()})
            grads.update({f"predictor.{k}": v for k, v in model.predictor.grads().items()})
            optimizer.step(grads, cosine_lr(step, total_steps, base_lr))
            ema_update(target_params, tracked, config.beta)
            epoch_losses.append(loss)
            step += 1
            if step_hook is not None:
                step_hook(step, model, loss)
        history.append(float(np.mean(epoch_losses)))
    return model, history


def encode(model: ByolModel, windows: np.ndarray, rescaler: MinMaxRescaler) -> np.ndarray:
    """Online-encoder representations of raw (normalized) windows.

    ``model.input_prefix`` is applied before rescaling: training runs every
    view through the pipeline's deterministic head, so the encoder has only
    ever seen windows in that form.
    """
    return model.online_encoder.forward(
        flatten_windows(windows, rescaler, model.input_prefix), training=False)
