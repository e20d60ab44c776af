"""Layer implementations with explicit forward/backward passes.

Every layer computes in 64-bit floats.  Convolutional activations use a
channels-last layout ``(batch, length, channels)`` internally because the
im2col matmul then needs no transposes; :class:`~wearssl.nn.network.Network`
accepts the conventional ``(batch, channels, length)`` and converts once.

A layer caches whatever its backward pass needs during ``forward`` and is
therefore single-use between a forward and the matching backward; training
loops are sequential, so this is safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Input tensor incompatible with a layer's expected shape."""


LAYER_KINDS = (
    "conv1d",
    "dense",
    "batchnorm1d",
    "dropout",
    "relu",
    "sigmoid",
    "global_max_pool",
)


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer (shape of the computation, no weights)."""

    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        p = self.params
        if self.kind == "conv1d":
            if p["stride"] < 1:
                raise ValueError("conv1d stride must be >= 1")
            if p["kernel"] < 1 or p["in_channels"] < 1 or p["out_channels"] < 1:
                raise ValueError("conv1d sizes must be positive")
        elif self.kind == "dense":
            if p["out_features"] < 1:
                raise ValueError("dense output width must be >= 1")
        elif self.kind == "dropout":
            if not 0.0 <= p["rate"] < 1.0:
                raise ValueError("dropout rate must be in [0, 1)")


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base class; parameter-free layers only override forward/backward."""

    kind: str = ""
    lars_exempt_params: tuple[str, ...] = ()  # params updated without layer-wise scaling

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def spec(self) -> LayerSpec:
        return LayerSpec(self.kind)

    def forward(self, x: np.ndarray, training: bool, rng: np.random.Generator | None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv1d(Layer):
    """Valid-padding 1D convolution.

    Takes channels-last input ``(B, L, C_in)`` and returns
    ``(B, L', C_out)`` with ``L' = floor((L - k) / stride) + 1``.
    The weight is stored flattened as ``(k * C_in, C_out)`` so both the
    forward pass and the two backward matmuls are single GEMM calls.
    Kernel-major row order keeps the input-gradient scatter reading
    contiguous channel runs instead of stride-``k`` singletons.
    """

    kind = "conv1d"
    lars_exempt_params = ("bias",)

    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int = 1,
                 rng: np.random.Generator | None = None):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        LayerSpec("conv1d", {"in_channels": in_channels, "out_channels": out_channels,
                             "kernel": kernel, "stride": stride})  # validates
        rng = rng or np.random.default_rng()
        fan_in = in_channels * kernel
        fan_out = out_channels * kernel
        self.weight = glorot_uniform(rng, (in_channels * kernel, out_channels), fan_in, fan_out)
        self.bias = np.zeros(out_channels)
        self._cache = None
        self._grads: dict[str, np.ndarray] = {}

    def spec(self) -> LayerSpec:
        return LayerSpec("conv1d", {"in_channels": self.in_channels,
                                    "out_channels": self.out_channels,
                                    "kernel": self.kernel, "stride": self.stride})

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def grads(self):
        return self._grads

    def out_length(self, length: int) -> int:
        return (length - self.kernel) // self.stride + 1

    def forward(self, x, training, rng=None):
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeError(
                f"conv1d expects (batch, length, {self.in_channels}), got {x.shape}")
        if x.shape[1] < self.kernel:
            raise ShapeError(
                f"conv1d kernel {self.kernel} longer than input length {x.shape[1]}")
        windows = sliding_window_view(x, self.kernel, axis=1)[:, ::self.stride]
        b, lp = windows.shape[0], windows.shape[1]
        # (B, L', C_in, k) -> (B, L', k, C_in) so rows are kernel-major
        cols = windows.transpose(0, 1, 3, 2).reshape(b * lp, self.kernel * self.in_channels)
        y = cols @ self.weight
        if training:
            self._cache = (cols, x.shape)
        return y.reshape(b, lp, self.out_channels) + self.bias

    def backward(self, dy):
        cols, x_shape = self._cache
        b, lp, _ = dy.shape
        dyf = dy.reshape(b * lp, self.out_channels)
        self._grads = {"weight": cols.T @ dyf, "bias": dyf.sum(axis=0)}
        dcols = dyf @ self.weight.T
        dwin = dcols.reshape(b, lp, self.kernel, self.in_channels)
        dx = np.zeros(x_shape)
        for j in range(self.kernel):
            dx[:, j:j + lp * self.stride:self.stride] += dwin[:, :, j]
        return dx


class Dense(Layer):
    """Fully connected layer, ``y = x @ W + b`` on ``(B, n_in)`` input."""

    kind = "dense"
    lars_exempt_params = ("bias",)

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator | None = None):
        LayerSpec("dense", {"in_features": in_features, "out_features": out_features})
        self.in_features = in_features
        self.out_features = out_features
        rng = rng or np.random.default_rng()
        self.weight = glorot_uniform(rng, (in_features, out_features), in_features, out_features)
        self.bias = np.zeros(out_features)
        self._cache = None
        self._grads: dict[str, np.ndarray] = {}

    def spec(self):
        return LayerSpec("dense", {"in_features": self.in_features,
                                   "out_features": self.out_features})

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def grads(self):
        return self._grads

    def forward(self, x, training, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"dense expects (batch, {self.in_features}), got {x.shape}")
        if training:
            self._cache = x
        return x @ self.weight + self.bias

    def backward(self, dy):
        x = self._cache
        self._grads = {"weight": x.T @ dy, "bias": dy.sum(axis=0)}
        return dy @ self.weight.T


class BatchNorm1d(Layer):
    """Batch normalization over feature vectors ``(B, D)``.

    Training mode normalizes with batch statistics and updates the running
    estimates; inference mode uses the running estimates only.
    """

    kind = "batchnorm1d"
    lars_exempt_params = ("gamma", "beta")

    def __init__(self, num_features: int, momentum: float = 0.9, eps: float = 1e-5):
        self.num_features = num_features
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(num_features)
        self.beta = np.zeros(num_features)
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self._cache = None
        self._grads: dict[str, np.ndarray] = {}

    def spec(self):
        return LayerSpec("batchnorm1d", {"num_features": self.num_features,
                                         "momentum": self.momentum, "eps": self.eps})

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return self._grads

    def buffers(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, training, rng=None):
        if x.ndim != 2 or x.shape[1] != self.num_features:
            raise ShapeError(f"batchnorm1d expects (batch, {self.num_features}), got {x.shape}")
        if training:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        if training:
            self._cache = (xhat, inv_std)
        return self.gamma * xhat + self.beta

    def backward(self, dy):
        xhat, inv_std = self._cache
        n = dy.shape[0]
        self._grads = {"gamma": (dy * xhat).sum(axis=0), "beta": dy.sum(axis=0)}
        dxhat = dy * self.gamma
        # standard batchnorm backward through the batch statistics
        dx = inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        return dx


class Dropout(Layer):
    """Inverted dropout; identity at inference."""

    kind = "dropout"

    def __init__(self, rate: float):
        LayerSpec("dropout", {"rate": rate})
        self.rate = rate
        self._mask = None

    def spec(self):
        return LayerSpec("dropout", {"rate": self.rate})

    def forward(self, x, training, rng=None):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("dropout in training mode needs an RNG")
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training, rng=None):
        if training:
            self._mask = x > 0
        return np.maximum(x, 0.0)

    def backward(self, dy):
        return dy * self._mask


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, training, rng=None):
        # split by sign for numerical stability
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        if training:
            self._out = out
        return out

    def backward(self, dy):
        return dy * self._out * (1.0 - self._out)


class GlobalMaxPool(Layer):
    """Max over the time axis: ``(B, L, C) -> (B, C)``."""

    kind = "global_max_pool"

    def forward(self, x, training, rng=None):
        if x.ndim != 3:
            raise ShapeError(f"global_max_pool expects (batch, length, channels), got {x.shape}")
        idx = x.argmax(axis=1)
        if training:
            self._cache = (idx, x.shape)
        b, _, c = x.shape
        return x[np.arange(b)[:, None], idx, np.arange(c)[None, :]]

    def backward(self, dy):
        idx, x_shape = self._cache
        dx = np.zeros(x_shape)
        b, _, c = x_shape
        dx[np.arange(b)[:, None], idx, np.arange(c)[None, :]] = dy
        return dx


def build_layer(spec: LayerSpec, rng: np.random.Generator | None = None) -> Layer:
    """Materialize a layer (with freshly initialized parameters) from its spec."""
    kind, p = spec.kind, spec.params
    if kind == "conv1d":
        return Conv1d(p["in_channels"], p["out_channels"], p["kernel"], p["stride"], rng=rng)
    if kind == "dense":
        return Dense(p["in_features"], p["out_features"], rng=rng)
    if kind == "batchnorm1d":
        return BatchNorm1d(p["num_features"], p.get("momentum", 0.9), p.get("eps", 1e-5))
    if kind == "dropout":
        return Dropout(p["rate"])
    if kind == "relu":
        return ReLU()
    if kind == "sigmoid":
        return Sigmoid()
    if kind == "global_max_pool":
        return GlobalMaxPool()
    raise ValueError(f"unknown layer kind {kind!r}")
