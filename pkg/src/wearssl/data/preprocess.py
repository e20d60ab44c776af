"""Record preprocessing: gap handling, z-scoring, windowing, participant splits.

Order of operations:

  1. short NaN gaps (<= max_gap samples) are linearly interpolated per
     channel; the sleep flag is interpolated then thresholded back to {0, 1};
     longer gaps and edge NaNs split the record into contiguous segments
  2. participants without a single segment of at least one window are
     excluded with a warning
  3. the remaining participants are shuffled into train/val/test by seed
     (n_val = floor(val_fraction * n), n_test likewise, rest train)
  4. activity and light are z-scored with statistics fitted on the train
     participants only; the sleep flag is left untouched
  5. each segment is cut into non-overlapping windows, leftovers dropped

Windows carry their participant id and split tag so that downstream stages
can assert the splits never mix.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import container
from ..util import derive_rng
from .records import CHANNELS, WINDOW_LENGTH, ParticipantRecord, Window, validate_labels

SPLITS = ("train", "val", "test")
SCALED_CHANNELS = (0, 1)  # activity, light; the sleep flag stays binary


@dataclass
class PreprocessConfig:
    window_length: int = WINDOW_LENGTH
    max_gap: int = 10
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    split_seed: int = 0
    zscore: bool = True
    std_floor: float = 1e-8

    def __post_init__(self):
        if self.window_length < 1:
            raise ValueError("window_length must be >= 1")
        if self.max_gap < 0:
            raise ValueError("max_gap must be >= 0")
        if not 0.0 < self.val_fraction < 1.0 or not 0.0 < self.test_fraction < 1.0:
            raise ValueError("split fractions must lie in (0, 1)")
        if self.val_fraction + self.test_fraction >= 1.0:
            raise ValueError("val_fraction + test_fraction must be < 1")


def _nan_runs(mask: np.ndarray):
    """(start, stop) pairs of consecutive True entries."""
    if not mask.any():
        return []
    padded = np.diff(np.concatenate(([False], mask, [False])).astype(np.int8))
    starts = np.flatnonzero(padded == 1)
    stops = np.flatnonzero(padded == -1)
    return list(zip(starts.tolist(), stops.tolist()))


def interpolate_gaps(values: np.ndarray, max_gap: int) -> tuple[np.ndarray, int]:
    """Fill interior NaN runs of length <= max_gap per channel.

    Returns the filled copy and the number of imputed samples.  The sleep
    flag (channel 2) is interpolated then thresholded at 0.5.  Runs that are
    too long, or touch either end of the record, stay NaN.
    """
    out = values.astype(np.float64, copy=True)
    n = out.shape[1]
    imputed = 0
    for c in range(out.shape[0]):
        ch = out[c]
        for start, stop in _nan_runs(np.isnan(ch)):
            length = stop - start
            if length > max_gap or start == 0 or stop == n:
                continue
            left, right = ch[start - 1], ch[stop]
            t = np.arange(1, length + 1) / (length + 1)
            ch[start:stop] = left + t * (right - left)
            imputed += length
        if c == 2:
            finite = ~np.isnan(ch)
            ch[finite] = (ch[finite] >= 0.5).astype(np.float64)
    return out, imputed


def usable_segments(values: np.ndarray) -> list[tuple[int, int]]:
    """Contiguous spans where every channel is finite."""
    usable = np.isfinite(values).all(axis=0)
    return _nan_runs(usable)


def assign_splits(participant_ids, seed: int,
                  val_fraction: float = 0.1,
                  test_fraction: float = 0.1) -> dict[str, str]:
    """Participant-level split by seeded shuffle of the sorted id list."""
    ids = sorted(participant_ids)
    n = len(ids)
    if len(set(ids)) != n:
        raise ValueError("duplicate participant ids")
    n_val = math.floor(val_fraction * n)
    n_test = math.floor(test_fraction * n)
    if n_val == 0 or n_test == 0 or n - n_val - n_test == 0:
        raise ValueError(
            f"cannot split {n} participants into non-empty train/val/test "
            f"at fractions {val_fraction}/{test_fraction}")
    order = derive_rng(seed, "participant-split").permutation(n)
    assignment = {}
    for rank, idx in enumerate(order.tolist()):
        if rank < n_test:
            split = "test"
        elif rank < n_test + n_val:
            split = "val"
        else:
            split = "train"
        assignment[ids[idx]] = split
    return assignment


@dataclass
class WindowSet:
    windows: list[Window]
    split_ids: dict[str, tuple[str, ...]]
    channel_stats: dict[str, tuple[float, float]] = field(default_factory=dict)
    n_imputed: int = 0
    excluded: tuple[str, ...] = ()

    def by_split(self, split: str) -> list[Window]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return [w for w in self.windows if w.split == split]

    def assert_no_leakage(self):
        seen: dict[str, str] = {}
        for w in self.windows:
            prior = seen.setdefault(w.participant_id, w.split)
            assert prior == w.split, (
                f"participant {w.participant_id} appears in both "
                f"{prior!r} and {w.split!r}")
        for a in SPLITS:
            for b in SPLITS:
                if a < b:
                    overlap = set(self.split_ids[a]) & set(self.split_ids[b])
                    assert not overlap, f"splits {a}/{b} share {sorted(overlap)}"


def preprocess(records: list[ParticipantRecord],
               config: PreprocessConfig | None = None) -> WindowSet:
    config = config or PreprocessConfig()
    wl = config.window_length

    cleaned: dict[str, tuple[np.ndarray, list[tuple[int, int]]]] = {}
    labels: dict[str, dict[str, int]] = {}
    total_imputed = 0
    excluded = []
    for rec in sorted(records, key=lambda r: r.participant_id):
        if rec.participant_id in cleaned or rec.participant_id in excluded:
            raise ValueError(f"duplicate participant id {rec.participant_id!r}")
        validate_labels(rec.labels)
        values, imputed = interpolate_gaps(rec.values, config.max_gap)
        total_imputed += imputed
        segments = [(a, b) for a, b in usable_segments(values) if b - a >= wl]
        if not segments:
            excluded.append(rec.participant_id)
            warnings.warn(
                f"participant {rec.participant_id!r} has no contiguous run of "
                f"{wl} usable samples; excluded", stacklevel=2)
            continue
        cleaned[rec.participant_id] = (values, segments)
        labels[rec.participant_id] = dict(rec.labels)

    if not cleaned:
        raise ValueError("no participants with usable data")
    assignment = assign_splits(cleaned, config.split_seed,
                               config.val_fraction, config.test_fraction)

    stats: dict[str, tuple[float, float]] = {}
    if config.zscore:
        train_chunks = [values[:, a:b]
                        for pid, (values, segs) in sorted(cleaned.items())
                        if assignment[pid] == "train"
                        for a, b in segs]
        pooled = np.concatenate(train_chunks, axis=1)
        for c in SCALED_CHANNELS:
            mean = float(pooled[c].mean())
            std = max(float(pooled[c].std()), config.std_floor)
            stats[CHANNELS[c]] = (mean, std)

    windows = []
    for pid, (values, segments) in sorted(cleaned.items()):
        scaled = values.copy()
        for c in SCALED_CHANNELS:
            if config.zscore:
                mean, std = stats[CHANNELS[c]]
                scaled[c] = (scaled[c] - mean) / std
        split = assignment[pid]
        for a, b in segments:
            for k in range((b - a) // wl):
                chunk = scaled[:, a + k * wl:a + (k + 1) * wl].copy()
                windows.append(Window(chunk, pid, dict(labels[pid]), split))

    split_ids = {s: tuple(pid for pid in sorted(cleaned) if assignment[pid] == s)
                 for s in SPLITS}
    out = WindowSet(windows, split_ids, stats, total_imputed, tuple(excluded))
    out.assert_no_leakage()
    return out


def save_windows(path, ws: WindowSet):
    if not ws.windows:
        raise ValueError("refusing to save an empty window set")
    tasks = sorted(ws.windows[0].labels)
    ids = sorted({w.participant_id for w in ws.windows})
    id_index = {pid: i for i, pid in enumerate(ids)}
    values = np.stack([w.values for w in ws.windows]).astype(np.float64)
    participant = np.array([id_index[w.participant_id] for w in ws.windows],
                           dtype=np.int64)
    label_mat = np.array([[w.labels[t] for t in tasks] for w in ws.windows],
                         dtype=np.int64)
    split_idx = np.array([SPLITS.index(w.split) for w in ws.windows], dtype=np.int64)
    meta = {
        "kind": "windows",
        "tasks": tasks,
        "participants": ids,
        "split_ids": {s: list(ws.split_ids[s]) for s in SPLITS},
        "channel_stats": {k: list(v) for k, v in ws.channel_stats.items()},
        "n_imputed": ws.n_imputed,
        "excluded": list(ws.excluded),
    }
    container.save_arrays(path, {
        "values": values,
        "participant": participant,
        "labels": label_mat,
        "split": split_idx,
    }, meta)


def load_windows(path) -> WindowSet:
    arrays, meta = container.load_arrays(path)
    if meta.get("kind") != "windows":
        raise container.ContainerError(f"{path}: not a window store")
    tasks = meta["tasks"]
    ids = meta["participants"]
    windows = []
    for i in range(arrays["values"].shape[0]):
        labels = {t: int(arrays["labels"][i, j]) for j, t in enumerate(tasks)}
        windows.append(Window(arrays["values"][i],
                              ids[int(arrays["participant"][i])],
                              labels,
                              SPLITS[int(arrays["split"][i])]))
    ws = WindowSet(
        windows,
        {s: tuple(meta["split_ids"][s]) for s in SPLITS},
        {k: (float(v[0]), float(v[1])) for k, v in meta["channel_stats"].items()},
        int(meta["n_imputed"]),
        tuple(meta["excluded"]),
    )
    ws.assert_no_leakage()
    return ws
