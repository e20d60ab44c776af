"""Independent reference implementations the tests check the package against.

Everything here is deliberately naive: pure-python loops, central finite
differences, no vectorization.  The package must agree with these, not the
other way around.
"""

from __future__ import annotations

import math

import numpy as np

FD_EPS = 1e-5


def fd_grad(f, x: np.ndarray, eps: float = FD_EPS) -> np.ndarray:
    """Central finite differences of scalar f over every coordinate of x."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max_i |a_i - n_i| / max(1, |a_i|, |n_i|)."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def nt_xent_reference(z: np.ndarray, pairs: np.ndarray, tau: float) -> float:
    """Literal double-loop softmax form of the contrastive loss."""
    n = z.shape[0]
    zhat = [np.asarray(z[i], dtype=np.float64) / np.linalg.norm(z[i]) for i in range(n)]
    total = 0.0
    for i in range(n):
        num = math.exp(float(np.dot(zhat[i], zhat[pairs[i]])) / tau)
        den = 0.0
        for k in range(n):
            if k != i:
                den += math.exp(float(np.dot(zhat[i], zhat[k])) / tau)
        total += -math.log(num / den)
    return total / n


def byol_loss_reference(p_v, t_vp, p_vp, t_v, normalize: bool = True) -> float:
    """Elementwise two-term regression loss, mean over coordinates then batch."""

    def unit(vec):
        norm = math.sqrt(sum(float(x) * float(x) for x in vec))
        return [float(x) / norm for x in vec]

    def term(p, t):
        if normalize:
            p, t = unit(p), unit(t)
        else:
            p, t = [float(x) for x in p], [float(x) for x in t]
        return sum((a - b) ** 2 for a, b in zip(p, t)) / len(p)

    batch = len(p_v)
    total = 0.0
    for b in range(batch):
        total += term(p_v[b], t_vp[b]) + term(p_vp[b], t_v[b])
    return total / batch


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def f1_reference(predictions, labels, n_classes: int) -> tuple[float, float]:
    """Count-based per-class F1, macro mean, and pooled (accuracy) micro."""
    per_class = []
    for c in range(n_classes):
        tp = sum(1 for p, y in zip(predictions, labels) if p == c and y == c)
        fp = sum(1 for p, y in zip(predictions, labels) if p == c and y != c)
        fn = sum(1 for p, y in zip(predictions, labels) if p != c and y == c)
        per_class.append(f1_from_counts(tp, fp, fn))
    macro = sum(per_class) / n_classes
    micro = sum(1 for p, y in zip(predictions, labels) if p == y) / len(labels)
    return macro, micro


def ema_replay(initial: dict, online_history: list[dict], beta: float) -> dict:
    """Replay the target-parameter recurrence from the recorded online history."""
    target = {k: np.array(v, dtype=np.float64, copy=True) for k, v in initial.items()}
    for snapshot in online_history:
        for k in target:
            target[k] = beta * target[k] + (1.0 - beta) * snapshot[k]
    return target
