"""Ordered-layer network container with reverse-mode gradient evaluation."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .layers import Conv1d, Dense, GlobalMaxPool, Layer, LayerSpec, ShapeError, build_layer

LossTail = Callable[[np.ndarray], tuple[float, np.ndarray]]


class Network:
    """A sequential stack of layers.

    ``input_kind`` declares the batch layout the network accepts:

    * ``"ncl"`` — ``(batch, channels, length)`` time series; converted once
      to channels-last internally, so convolutional stacks run without
      per-layer transposes.
    * ``"nd"`` — flat ``(batch, features)`` vectors.

    Forward in training mode caches per-layer context; ``backward`` then
    propagates a loss gradient and the per-parameter gradients become
    available through :meth:`grads`.
    """

    def __init__(self, layers: list[Layer], input_kind: str = "nd"):
        if input_kind not in ("ncl", "nd"):
            raise ValueError(f"input_kind must be 'ncl' or 'nd', got {input_kind!r}")
        self.layers = list(layers)
        self.input_kind = input_kind
        self._spatial = input_kind == "ncl"

    # -- construction ---------------------------------------------------

    def specs(self) -> list[LayerSpec]:
        return [layer.spec() for layer in self.layers]

    @classmethod
    def from_specs(cls, specs: list[LayerSpec], input_kind: str,
                   rng: np.random.Generator | None = None) -> "Network":
        return cls([build_layer(s, rng) for s in specs], input_kind)

    # -- parameters -----------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        """Flat name -> array view of every trainable parameter."""
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                out[f"{i}.{name}"] = arr
        return out

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        for i, layer in enumerate(self.layers):
            for name in layer.params():
                key = f"{i}.{name}"
                arr = layer.params()[name]
                arr[...] = values[key]

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.grads().items():
                out[f"{i}.{name}"] = arr
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            if hasattr(layer, "buffers"):
                for name, arr in layer.buffers().items():
                    out[f"{i}.{name}"] = arr
        return out

    def lars_exempt(self) -> set[str]:
        """Parameter names updated without layer-wise rate scaling (biases, batchnorm)."""
        out = set()
        for i, layer in enumerate(self.layers):
            for name in layer.lars_exempt_params:
                out.add(f"{i}.{name}")
        return out

    def n_params(self) -> int:
        return sum(a.size for a in self.params().values())

    def copy(self) -> "Network":
        """Deep copy with identical parameter and buffer values."""
        rng = np.random.default_rng(0)
        clone = Network.from_specs(self.specs(), self.input_kind, rng)
        clone.set_params({k: v.copy() for k, v in self.params().items()})
        for (_, dst), (_, src) in zip(clone.buffers().items(), self.buffers().items()):
            dst[...] = src
        return clone

    # -- execution --------------------------------------------------------

    def _to_internal(self, batch: np.ndarray) -> np.ndarray:
        if self._spatial:
            if batch.ndim != 3:
                raise ShapeError(f"expected (batch, channels, length), got shape {batch.shape}")
            return np.ascontiguousarray(batch.transpose(0, 2, 1))
        if batch.ndim != 2:
            raise ShapeError(f"expected (batch, features), got shape {batch.shape}")
        return batch

    def forward(self, batch: np.ndarray, training: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        """Run the stack; identity for an empty network.

        Dropout masks are drawn from ``rng`` (training mode only).  Shape
        mismatches raise :class:`ShapeError` naming the offending layer.
        """
        x = np.asarray(batch, dtype=np.float64)
        if self.layers:
            x = self._to_internal(x)
        for i, layer in enumerate(self.layers):
            try:
                x = layer.forward(x, training, rng)
            except ShapeError as e:
                raise ShapeError(f"layer {i} ({layer.kind}): {e}") from None
        return x

    def backward(self, dy: np.ndarray, skip_input_grad: bool = False) -> np.ndarray | None:
        """Propagate an output gradient; per-layer parameter grads are stored.

        With ``skip_input_grad`` and a leading conv layer, the (expensive,
        never consumed) gradient with respect to the network input is not
        materialized; parameter gradients are unaffected.
        """
        if skip_input_grad and self.layers and isinstance(self.layers[0], (Conv1d, Dense)):
            for layer in reversed(self.layers[1:]):
                dy = layer.backward(dy)
            first = self.layers[0]
            if isinstance(first, Dense):
                x = first._cache
                first._grads = {"weight": x.T @ dy, "bias": dy.sum(axis=0)}
            else:
                cols, _ = first._cache
                b, lp = dy.shape[0], dy.shape[1]
                dyf = dy.reshape(b * lp, first.out_channels)
                first._grads = {"weight": cols.T @ dyf, "bias": dyf.sum(axis=0)}
            return None
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def loss_gradients(self, batch: np.ndarray, loss_tail: LossTail,
                       rng: np.random.Generator | None = None,
                       skip_input_grad: bool = False) -> tuple[float, dict[str, np.ndarray]]:
        """Forward in training mode, reduce with ``loss_tail``, backpropagate.

        ``loss_tail`` maps the network output to ``(loss, dloss/doutput)``.
        Returns the loss and the flat gradient dict.  A non-finite loss is
        rejected immediately.
        """
        y = self.forward(batch, training=True, rng=rng)
        loss, dy = loss_tail(y)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss: {loss}")
        self.backward(dy, skip_input_grad=skip_input_grad)
        return loss, self.grads()

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Shape produced for one sample, following the composition rules.

        ``input_shape`` excludes the batch axis: ``(channels, length)`` for
        ``ncl`` networks, ``(features,)`` for ``nd``.
        """
        if self.input_kind == "ncl":
            c, length = input_shape
        else:
            (c,) = input_shape
            length = None
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv1d):
                if length is None or length < layer.kernel:
                    raise ShapeError(f"layer {i} (conv1d): input length {length} too short")
                length = layer.out_length(length)
                c = layer.out_channels
            elif isinstance(layer, GlobalMaxPool):
                length = None
            elif layer.kind == "dense":
                c = layer.out_features
        return (c,) if length is None else (c, length)
