"""LARS and Adam parameter updates plus the cosine decay schedule."""

from __future__ import annotations

import numpy as np

Params = dict[str, np.ndarray]


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Half-cosine decay from ``base_lr`` at step 0 to 0 at ``total_steps``.

    Steps past the end clamp to 0 so callers can keep stepping a finished
    schedule without going negative.
    """
    if total_steps < 1:
        raise ValueError(f"total_steps must be >= 1, got {total_steps}")
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if step > total_steps:
        return 0.0
    return float(base_lr * 0.5 * (1.0 + np.cos(np.pi * step / total_steps)))


def _check_lr(lr: float) -> None:
    # lr 0 is legal: the cosine schedule ends there
    if not np.isfinite(lr) or lr < 0:
        raise ValueError(f"learning rate must be finite and >= 0, got {lr}")


class Lars:
    """Layer-wise adaptive rate scaling with momentum.

    Each parameter array takes the step lr * trust * m where
    m <- momentum * m + (g + weight_decay * w) and

        trust = coeff * ||w|| / (||g|| + weight_decay * ||w|| + eps)

    with trust pinned to 1 when both norms are exactly zero.  Names listed
    in ``exempt`` (biases, batchnorm scale/shift) skip the scaling and the
    decay entirely and take plain momentum SGD steps at the scheduled lr.

    Updates happen in place, so the arrays passed in keep identifying the
    live model parameters.
    """

    def __init__(self, params: Params, exempt: set[str] | frozenset = frozenset(),
                 trust_coefficient: float = 0.001, weight_decay: float = 1e-6,
                 momentum: float = 0.9, eps: float = 1e-9):
        unknown = set(exempt) - set(params)
        if unknown:
            raise KeyError(f"exempt names not in params: {sorted(unknown)}")
        self.params = dict(params)
        self.exempt = set(exempt)
        self.trust_coefficient = trust_coefficient
        self.weight_decay = weight_decay
        self.momentum = momentum
        self.eps = eps
        self.momentum_buffers = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.step_count = 0

    def step(self, grads: Params, lr: float) -> None:
        _check_lr(lr)
        self.step_count += 1
        for name, w in self.params.items():
            g = grads[name]
            if g.shape != w.shape:
                raise ValueError(f"grad shape {g.shape} != param shape {w.shape} for {name!r}")
            m = self.momentum_buffers[name]
            if name in self.exempt:
                m *= self.momentum
                m += g
                w -= lr * m
                continue
            m *= self.momentum
            m += g + self.weight_decay * w
            w_norm = float(np.linalg.norm(w))
            g_norm = float(np.linalg.norm(g))
            if w_norm == 0.0 and g_norm == 0.0:
                trust = 1.0
            else:
                trust = self.trust_coefficient * w_norm / (
                    g_norm + self.weight_decay * w_norm + self.eps)
            w -= lr * trust * m


class Adam:
    """Bias-corrected Adam. Updates the given arrays in place."""

    def __init__(self, params: Params, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = dict(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.step_count = 0

    def step(self, grads: Params, lr: float) -> None:
        _check_lr(lr)
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, w in self.params.items():
            g = grads[name]
            if g.shape != w.shape:
                raise ValueError(f"grad shape {g.shape} != param shape {w.shape} for {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            w -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
