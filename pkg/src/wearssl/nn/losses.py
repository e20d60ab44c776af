"""Scalar loss heads returning (value, gradient) pairs for backpropagation."""

from __future__ import annotations

import numpy as np


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of integer ``labels`` under row softmax.

    Returns the loss and its gradient with respect to the logits.
    """
    if logits.ndim != 2:
        raise ValueError(f"expected (batch, classes) logits, got shape {logits.shape}")
    n = logits.shape[0]
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {n}")
    ls = log_softmax(logits)
    rows = np.arange(n)
    loss = float(-ls[rows, labels].mean())
    grad = np.exp(ls)
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, grad


def mse(output: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over every element of the squared difference."""
    if output.shape != target.shape:
        raise ValueError(f"shape mismatch: {output.shape} vs {target.shape}")
    diff = output - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


def sum_of_outputs(output: np.ndarray) -> tuple[float, np.ndarray]:
    """loss = sum(y); gradient of ones. Handy for gradient plumbing checks."""
    return float(output.sum()), np.ones_like(output)
