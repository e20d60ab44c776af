"""Actigraphy data handling: record model, CSV I/O, synthesis, preprocessing."""

from .preprocess import (
    PreprocessConfig,
    WindowSet,
    assign_splits,
    interpolate_gaps,
    load_windows,
    preprocess,
    save_windows,
    usable_segments,
)
from .records import (
    CADENCE_SECONDS,
    CHANNELS,
    DEFAULT_PREVALENCES,
    TASKS,
    WINDOW_LENGTH,
    ParticipantRecord,
    Window,
    parse_actigraphy_csv,
    read_labels_csv,
    validate_labels,
    write_actigraphy_csv,
)
from .synthetic import (
    EPOCH0,
    SAMPLES_PER_HOUR,
    SyntheticConfig,
    draw_labels,
    generate_participant_trace,
    generate_synthetic,
    participant_seed,
)

__all__ = [
    "CADENCE_SECONDS",
    "CHANNELS",
    "DEFAULT_PREVALENCES",
    "EPOCH0",
    "SAMPLES_PER_HOUR",
    "TASKS",
    "WINDOW_LENGTH",
    "ParticipantRecord",
    "PreprocessConfig",
    "SyntheticConfig",
    "Window",
    "WindowSet",
    "assign_splits",
    "draw_labels",
    "generate_participant_trace",
    "generate_synthetic",
    "interpolate_gaps",
    "load_windows",
    "parse_actigraphy_csv",
    "participant_seed",
    "preprocess",
    "read_labels_csv",
    "save_windows",
    "usable_segments",
    "validate_labels",
    "write_actigraphy_csv",
]
