"""Frozen-representation evaluation: embeddings, linear probes, F1, run CIs.

The probe is a multinomial logistic regression trained by full-batch
gradient descent with Armijo backtracking.  The objective is convex, so any
initialization reaches the same optimum; embeddings are standardized with
statistics from the fitting split only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from .nn.losses import log_softmax

PROBE_LAMBDAS = (1e-2, 1e-3, 1e-4)


# -- metrics ---------------------------------------------------------------

def f1_scores(y_true, y_pred, n_classes: int) -> dict:
    """Per-class precision/recall/F1 plus macro and micro averages.

    A class with zero predicted and zero true instances contributes an F1 of
    0 to the macro average.  Micro-F1 pools counts over classes, which for
    single-label classification equals plain accuracy.
    """
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError("y_true and y_pred must be equal-length 1-d arrays")
    if y_true.size == 0:
        raise ValueError("empty label arrays")
    for arr, name in ((y_true, "y_true"), (y_pred, "y_pred")):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ValueError(f"{name} labels outside [0, {n_classes})")

    per_class = []
    tp_total = fp_total = fn_total = 0
    for c in range(n_classes):
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        fp = int(np.sum((y_pred == c) & (y_true != c)))
        fn = int(np.sum((y_pred != c) & (y_true == c)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append({"precision": precision, "recall": recall, "f1": f1})
        tp_total += tp
        fp_total += fp
        fn_total += fn
    micro_p = tp_total / (tp_total + fp_total) if tp_total + fp_total else 0.0
    micro_r = tp_total / (tp_total + fn_total) if tp_total + fn_total else 0.0
    micro = 2 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r else 0.0
    return {
        "per_class": per_class,
        "macro_f1": float(np.mean([c["f1"] for c in per_class])),
        "micro_f1": micro,
        "accuracy": float(np.mean(y_true == y_pred)),
    }


def aggregate_runs(values) -> tuple[float, float]:
    """Mean and 95% t-interval half-width over independent run scores."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("need a non-empty 1-d array of run scores")
    n = values.size
    mean = float(values.mean())
    if n == 1:
        return mean, float("nan")
    sd = float(values.std(ddof=1))
    t = float(sstats.t.ppf(0.975, n - 1))
    return mean, t * sd / math.sqrt(n)


# -- embeddings ------------------------------------------------------------

def extract_embeddings(encode_fn, windows, batch_size: int = 256) -> np.ndarray:
    """Apply ``encode_fn`` over windows in batches; rejects non-finite input.

    ``windows`` is a list of Window objects or a (n, channels, length) array.
    Batched extraction matches one-at-a-time extraction because encoders run
    in inference mode.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if hasattr(windows, "ndim"):
        values = np.asarray(windows, dtype=np.float64)
        names = [str(i) for i in range(values.shape[0])]
    else:
        if not windows:
            raise ValueError("no windows to embed")
        values = np.stack([w.values for w in windows]).astype(np.float64)
        names = [f"{w.participant_id}[{i}]" for i, w in enumerate(windows)]
    bad = np.flatnonzero(~np.isfinite(values).all(axis=(1, 2)))
    if bad.size:
        raise ValueError(f"non-finite values in window {names[bad[0]]}")
    chunks = [encode_fn(values[s:s + batch_size])
              for s in range(0, values.shape[0], batch_size)]
    return np.concatenate(chunks, axis=0)


def embeddings_by_split(window_set, encode_fn, task: str):
    """(X, y) per split for one task, with the leakage guard re-asserted."""
    window_set.assert_no_leakage()
    out = {}
    for split in ("train", "val", "test"):
        windows = window_set.by_split(split)
        if not windows:
            raise ValueError(f"split {split!r} has no windows")
        X = extract_embeddings(encode_fn, windows)
        y = np.array([w.labels[task] for w in windows], dtype=int)
        out[split] = (X, y)
    return out


# -- linear probe ------------------------------------------------------------

@dataclass
class LinearProbe:
    weights: np.ndarray           # (d, n_classes)
    bias: np.ndarray              # (n_classes,)
    mean: np.ndarray
    std: np.ndarray
    lam: float
    n_iter: int = 0
    converged: bool = False
    history: list = field(default_factory=list, repr=False)

    def scores(self, X: np.ndarray) -> np.ndarray:
        Xs = (np.asarray(X, dtype=np.float64) - self.mean) / self.std
        return Xs @ self.weights + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.scores(X), axis=1)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return np.exp(log_softmax(self.scores(X)))


def _probe_objective(Xs, onehot, y, W, b, lam):
    n = Xs.shape[0]
    logits = Xs @ W + b
    logp = log_softmax(logits)
    nll = -float(logp[np.arange(n), y].mean()) + 0.5 * lam * float(np.sum(W * W))
    G = (np.exp(logp) - onehot) / n
    gW = Xs.T @ G + lam * W
    gb = G.sum(axis=0)
    return nll, gW, gb


def fit_probe(X, y, n_classes: int | None = None, lam: float = 1e-4,
              max_iter: int = 5000, tol: float = 1e-5,
              init_seed: int | None = None, init_scale: float = 0.0) -> LinearProbe:
    """Multinomial logistic regression on standardized features.

    L2 decay applies to the weight matrix only, never the bias.  Training
    stops when the gradient 2-norm falls below ``tol`` or after
    ``max_iter`` Armijo-backtracked descent steps.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, d) with matching 1-d labels")
    classes = np.unique(y)
    if n_classes is None:
        n_classes = int(classes.max()) + 1
    if classes.size < 2:
        raise ValueError("labels contain a single class; nothing to fit")
    if classes.min() < 0 or classes.max() >= n_classes:
        raise ValueError(f"labels outside [0, {n_classes})")
    if lam < 0:
        raise ValueError("lam must be >= 0")

    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), 1e-8)
    Xs = (X - mean) / std
    n, d = Xs.shape
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0

    if init_scale > 0.0:
        rng = np.random.default_rng(init_seed or 0)
        W = rng.normal(0.0, init_scale, size=(d, n_classes))
        b = rng.normal(0.0, init_scale, size=n_classes)
    else:
        W = np.zeros((d, n_classes))
        b = np.zeros(n_classes)

    probe = LinearProbe(W, b, mean, std, lam)
    loss, gW, gb = _probe_objective(Xs, onehot, y, W, b, lam)
    step = 1.0
    for it in range(max_iter):
        gnorm = math.sqrt(float(np.sum(gW * gW)) + float(np.sum(gb * gb)))
        probe.history.append(loss)
        if gnorm <= tol:
            probe.converged = True
            break
        # Armijo backtracking on the steepest-descent direction
        step = min(step * 2.0, 1e4)
        g2 = gnorm * gnorm
        while True:
            W_new = W - step * gW
            b_new = b - step * gb
            loss_new, gW_new, gb_new = _probe_objective(Xs, onehot, y, W_new, b_new, lam)
            if loss_new <= loss - 1e-4 * step * g2 or step < 1e-12:
                break
            step *= 0.5
        W, b, loss, gW, gb = W_new, b_new, loss_new, gW_new, gb_new
        probe.n_iter = it + 1
    probe.weights, probe.bias = W, b
    return probe


def fit_probe_select(X_train, y_train, X_val, y_val, n_classes: int,
                     lambdas=PROBE_LAMBDAS, **kwargs) -> LinearProbe:
    """Fit one probe per candidate decay and keep the best validation
    macro-F1; ties go to the strongest decay."""
    best = None
    for lam in sorted(lambdas, reverse=True):
        probe = fit_probe(X_train, y_train, n_classes, lam=lam, **kwargs)
        score = f1_scores(y_val, probe.predict(X_val), n_classes)["macro_f1"]
        if best is None or score > best[0] + 1e-12:
            best = (score, probe)
    return best[1]


def evaluate_probe(probe: LinearProbe, X, y, n_classes: int) -> dict:
    return f1_scores(y, probe.predict(X), n_classes)
