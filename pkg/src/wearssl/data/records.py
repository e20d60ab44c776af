"""Participant records, window samples, task definitions, and CSV ingestion.

Raw data format (UTF-8, comma-separated, header required):

  data CSV:   participant_id, timestamp (ISO-8601, naive = UTC), activity,
              light, sleep_wake — one row per 30 s sample; empty numeric
              cells mark missing values and become NaN.
  labels CSV: participant_id plus one integer column per task, encoded so
              class 0 is the most prevalent (no-condition) category.

Label encodings:
  diabetes            0 non-diabetic, 1 pre-diabetic, 2 diabetic
  sleep_apnea         0 no, 1 yes
  insomnia            0 not clinically significant, 1 subthreshold, 2 moderate-to-severe
  hypertension        0 no, 1 yes
  metabolic_syndrome  0 no, 1 yes
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

CADENCE_SECONDS = 30
CHANNELS = ("activity", "light", "sleep_wake")
WINDOW_LENGTH = 512

TASKS: dict[str, int] = {
    "diabetes": 3,
    "sleep_apnea": 2,
    "insomnia": 3,
    "hypertension": 2,
    "metabolic_syndrome": 2,
}

# class marginals used by the synthetic generator; index 0 = healthiest /
# most common category (sleep apnea rows renormalized to sum to 1)
DEFAULT_PREVALENCES: dict[str, tuple[float, ...]] = {
    "diabetes": (0.469, 0.350, 0.181),
    "sleep_apnea": (0.9175, 0.0825),
    "insomnia": (0.598, 0.225, 0.177),
    "hypertension": (0.749, 0.251),
    "metabolic_syndrome": (0.663, 0.337),
}


@dataclass
class ParticipantRecord:
    """One participant's raw multichannel trace plus task labels.

    ``times`` holds epoch seconds; rows of ``values`` follow CHANNELS order
    and may contain NaN where a cell was missing.
    """

    participant_id: str
    times: np.ndarray
    values: np.ndarray  # (3, n_samples)
    labels: dict[str, int] = field(default_factory=dict)

    def n_samples(self) -> int:
        return int(self.times.size)


@dataclass
class Window:
    values: np.ndarray  # (3, WINDOW_LENGTH)
    participant_id: str
    labels: dict[str, int]
    split: str = ""


def validate_labels(labels: dict[str, int], where: str = "") -> None:
    for task, arity in TASKS.items():
        if task not in labels:
            raise ValueError(f"{where}missing label for task {task!r}")
        if not 0 <= int(labels[task]) < arity:
            raise ValueError(
                f"{where}label {labels[task]!r} out of range for {task!r} (0..{arity - 1})")


def _parse_timestamp(text: str, where: str) -> int:
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        raise ValueError(f"{where}bad timestamp {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _parse_cell(text: str, where: str, column: str) -> float:
    if text == "":
        return float("nan")
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"{where}non-numeric {column} value {text!r}") from None


def read_labels_csv(path) -> dict[str, dict[str, int]]:
    labels: dict[str, dict[str, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in ("participant_id", *TASKS) if c not in (reader.fieldnames or ())]
        if missing:
            raise ValueError(f"{path}: labels file missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            where = f"{path} line {lineno}: "
            pid = row["participant_id"]
            if pid in labels:
                raise ValueError(f"{where}duplicate participant {pid!r}")
            try:
                entry = {task: int(row[task]) for task in TASKS}
            except (TypeError, ValueError):
                raise ValueError(f"{where}non-integer label") from None
            validate_labels(entry, where)
            labels[pid] = entry
    return labels


def parse_actigraphy_csv(data_path, labels_path) -> list[ParticipantRecord]:
    """Read raw samples and labels into time-sorted per-participant records.

    Malformed rows raise with their line number.  Labels for unknown
    participants only warn; participants lacking labels are an error.
    """
    labels = read_labels_csv(labels_path)
    per_participant: dict[str, list[tuple[int, float, float, float]]] = {}
    columns = ("participant_id", "timestamp", "activity", "light", "sleep_wake")
    with open(data_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != list(columns):
            raise ValueError(f"{data_path}: expected header {','.join(columns)}")
        for lineno, row in enumerate(reader, start=2):
            where = f"{data_path} line {lineno}: "
            if len(row) != 5:
                raise ValueError(f"{where}expected 5 fields, got {len(row)}")
            pid = row[0]
            t = _parse_timestamp(row[1], where)
            activity = _parse_cell(row[2], where, "activity")
            light = _parse_cell(row[3], where, "light")
            sleep_wake = _parse_cell(row[4], where, "sleep_wake")
            if not np.isnan(sleep_wake) and sleep_wake not in (0.0, 1.0):
                raise ValueError(f"{where}sleep_wake must be 0 or 1, got {row[4]!r}")
            per_participant.setdefault(pid, []).append((t, activity, light, sleep_wake))

    unlabelled = sorted(set(per_participant) - set(labels))
    if unlabelled:
        raise ValueError(f"{data_path}: participants missing from labels file: {unlabelled[:5]}")
    for pid in sorted(set(labels) - set(per_participant)):
        warnings.warn(f"labels file names unknown participant {pid!r}")

    records = []
    for pid in sorted(per_participant):
        rows = sorted(per_participant[pid], key=lambda r: r[0])
        times = np.array([r[0] for r in rows], dtype=np.int64)
        if np.any(np.diff(times) == 0):
            raise ValueError(f"{data_path}: duplicate timestamp for participant {pid!r}")
        values = np.array([[r[1] for r in rows], [r[2] for r in rows],
                           [r[3] for r in rows]], dtype=np.float64)
        records.append(ParticipantRecord(pid, times, values, dict(labels[pid])))
    return records


def write_actigraphy_csv(records: list[ParticipantRecord], data_path, labels_path) -> None:
    """Inverse of parse_actigraphy_csv; NaN cells are written empty."""

    def fmt(x: float) -> str:
        return "" if np.isnan(x) else repr(float(x))

    with open(data_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("participant_id", "timestamp", "activity", "light", "sleep_wake"))
        for rec in records:
            for i, t in enumerate(rec.times):
                stamp = datetime.fromtimestamp(int(t), tz=timezone.utc)
                writer.writerow((rec.participant_id, stamp.strftime("%Y-%m-%dT%H:%M:%S"),
                                 fmt(rec.values[0, i]), fmt(rec.values[1, i]),
                                 fmt(rec.values[2, i])))
    with open(labels_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("participant_id", *TASKS))
        for rec in records:
            writer.writerow((rec.participant_id, *(rec.labels[t] for t in TASKS)))
