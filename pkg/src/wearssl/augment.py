"""Stochastic time-series transformations and their composition into view pairs.

Every transform maps a (channels, length) array to one of the same shape.
Transforms draw from an explicit Generator, so augmentation is a pure
function of (values, pipeline, seed); the composition order in a Pipeline is
preserved exactly as configured.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .data.records import Window

MIN_WARP_INCREMENT = 1e-3  # keeps the drawn time remap strictly monotone

_DEFAULTS = {
    "gaussian_noise": {"sigma": 0.05},
    "scale": {"mu": 1.0, "sigma": 0.1},
    "negate": {},
    "time_reverse": {},
    "channel_shuffle": {},
    "segment_permute": {"n_segments": 4},
    "time_warp": {"n_knots": 4, "sigma_knot": 0.2},
}

TRANSFORM_NAMES = tuple(_DEFAULTS)


@dataclass(frozen=True)
class AugmentationSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _DEFAULTS:
            raise ValueError(f"unknown transform {self.kind!r}; expected one of {TRANSFORM_NAMES}")
        merged = dict(_DEFAULTS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(f"{self.kind}: unknown parameters {sorted(unknown)}")
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        if self.kind in ("gaussian_noise", "scale") and merged["sigma"] < 0:
            raise ValueError(f"{self.kind}: sigma must be >= 0, got {merged['sigma']}")
        if self.kind == "segment_permute":
            if int(merged["n_segments"]) < 2:
                raise ValueError(f"segment_permute: n_segments must be >= 2, got {merged['n_segments']}")
        if self.kind == "time_warp":
            if int(merged["n_knots"]) < 2:
                raise ValueError(f"time_warp: n_knots must be >= 2, got {merged['n_knots']}")
            if merged["sigma_knot"] < 0:
                raise ValueError(f"time_warp: sigma_knot must be >= 0, got {merged['sigma_knot']}")


@dataclass(frozen=True)
class Pipeline:
    specs: tuple[AugmentationSpec, ...]

    def validate(self, window_length: int) -> None:
        """Config-time checks that need the window length."""
        for spec in self.specs:
            if spec.kind == "segment_permute" and spec.params["n_segments"] > window_length:
                raise ValueError(
                    f"segment_permute: n_segments {spec.params['n_segments']} exceeds "
                    f"window length {window_length}")

    def __len__(self):
        return len(self.specs)


def pipeline(*items) -> Pipeline:
    """Build a Pipeline from names or (name, params) tuples."""
    specs = []
    for item in items:
        if isinstance(item, AugmentationSpec):
            specs.append(item)
        elif isinstance(item, str):
            specs.append(AugmentationSpec(item))
        else:
            name, params = item
            specs.append(AugmentationSpec(name, dict(params)))
    return Pipeline(tuple(specs))


# shipped compositions for the two pretraining methods
SIMCLR_PIPELINE = pipeline("negate", "segment_permute", "time_reverse", "channel_shuffle", "scale")
BYOL_PIPELINE = pipeline("negate",
                         ("gaussian_noise", {"sigma": 0.05}),
                         ("scale", {"mu": 1.0, "sigma": 0.1}))

DETERMINISTIC_KINDS = ("negate", "time_reverse")


def deterministic_prefix(pipe: Pipeline) -> tuple[str, ...]:
    """Leading run of rng-free transforms at the head of a pipeline.

    These hit every view of every window identically, so they are not
    augmentations at all but a fixed change of input convention.  The
    encoder only ever sees windows in that form.
    """
    kinds: list[str] = []
    for spec in pipe.specs:
        if spec.kind not in DETERMINISTIC_KINDS:
            break
        kinds.append(spec.kind)
    return tuple(kinds)


def apply_input_prefix(windows: np.ndarray, prefix: tuple[str, ...]) -> np.ndarray:
    """Run (..., channels, length) windows through a deterministic prefix."""
    for kind in prefix:
        if kind not in DETERMINISTIC_KINDS:
            raise ValueError(f"non-deterministic input transform {kind!r}")
        windows = -windows if kind == "negate" else np.ascontiguousarray(windows[..., ::-1])
    return windows

_ITEM_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([^)]*)\s*\))?\s*$")


def parse_pipeline(text: str) -> Pipeline:
    """Parse 'negate, scale(mu=1.0, sigma=0.1), time_warp' style strings."""
    text = text.strip()
    if not text:
        return Pipeline(())
    items = re.split(r",(?![^(]*\))", text)
    specs = []
    for raw in items:
        m = _ITEM_RE.match(raw)
        if not m:
            raise ValueError(f"bad pipeline entry {raw.strip()!r}")
        name, arg_text = m.group(1), m.group(2)
        params = {}
        if arg_text:
            for pair in arg_text.split(","):
                if "=" not in pair:
                    raise ValueError(f"bad parameter {pair.strip()!r} in {raw.strip()!r}")
                key, value = (s.strip() for s in pair.split("=", 1))
                try:
                    params[key] = int(value) if re.fullmatch(r"[+-]?\d+", value) else float(value)
                except ValueError:
                    raise ValueError(f"non-numeric parameter {pair.strip()!r}") from None
        specs.append(AugmentationSpec(name, params))
    return Pipeline(tuple(specs))


def format_pipeline(pipe: Pipeline) -> str:
    parts = []
    for spec in pipe.specs:
        if spec.params:
            args = ", ".join(f"{k}={spec.params[k]}" for k in sorted(spec.params))
            parts.append(f"{spec.kind}({args})")
        else:
            parts.append(spec.kind)
    return ", ".join(parts)


# -- the seven transforms ------------------------------------------------


def gaussian_noise(values, rng, sigma=0.05):
    """Add i.i.d. noise per sample per channel."""
    if sigma == 0.0:
        return values.copy()
    return values + rng.normal(0.0, sigma, size=values.shape)


def scale(values, rng, mu=1.0, sigma=0.1):
    """Multiply each channel by one factor drawn per window."""
    factors = rng.normal(mu, sigma, size=(values.shape[0], 1))
    return values * factors


def negate(values, rng=None):
    return -values


def time_reverse(values, rng=None):
    return values[:, ::-1].copy()


def channel_shuffle(values, rng):
    """Permute whole channels; the multiset of channel vectors is preserved."""
    return values[rng.permutation(values.shape[0])].copy()


def apply_segment_permutation(values, permutation):
    """Reorder contiguous equal-as-possible time segments by ``permutation``."""
    bounds = np.array_split(np.arange(values.shape[1]), len(permutation))
    return np.concatenate([values[:, bounds[p]] for p in permutation], axis=1)


def segment_permute(values, rng, n_segments=4):
    """Shuffle contiguous time segments, the same order across channels."""
    return apply_segment_permutation(values, rng.permutation(n_segments))


def time_warp_remap(rng, n_knots, sigma_knot, length):
    """Draw the warped sample positions: strictly increasing, endpoints fixed.

    Knot increments come from N(1, sigma_knot), floored at a small positive
    value, then cumulative-normalized into a piecewise-linear remap of [0, 1].
    """
    increments = np.maximum(rng.normal(1.0, sigma_knot, size=n_knots), MIN_WARP_INCREMENT)
    knots_y = np.concatenate(([0.0], np.cumsum(increments)))
    knots_y /= knots_y[-1]
    knots_x = np.linspace(0.0, 1.0, n_knots + 1)
    t = np.linspace(0.0, 1.0, length)
    return np.interp(t, knots_x, knots_y) * (length - 1)


def time_warp(values, rng, n_knots=4, sigma_knot=0.2):
    """Resample along a random monotone time remap, shared across channels."""
    length = values.shape[1]
    src = time_warp_remap(rng, n_knots, sigma_knot, length)
    grid = np.arange(length, dtype=np.float64)
    out = np.empty_like(values, dtype=np.float64)
    for c in range(values.shape[0]):
        out[c] = np.interp(src, grid, values[c])
    return out


_APPLY = {
    "gaussian_noise": gaussian_noise,
    "scale": scale,
    "negate": negate,
    "time_reverse": time_reverse,
    "channel_shuffle": channel_shuffle,
    "segment_permute": segment_permute,
    "time_warp": time_warp,
}


def apply_transform(values: np.ndarray, spec: AugmentationSpec,
                    rng: np.random.Generator) -> np.ndarray:
    return _APPLY[spec.kind](values, rng, **spec.params)


def augment_values(values: np.ndarray, pipe: Pipeline, rng: np.random.Generator) -> np.ndarray:
    if values.ndim != 2:
        raise ValueError(f"expected (channels, length) values, got shape {values.shape}")
    out = np.asarray(values, dtype=np.float64)
    for spec in pipe.specs:
        out = apply_transform(out, spec, rng)
    return out.copy() if out is values else out


def _as_seedseq(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def augment(window: Window, pipe: Pipeline, seed) -> Window:
    """One stochastic draw of the pipeline; id, labels, and split carry over."""
    rng = np.random.default_rng(_as_seedseq(seed))
    return Window(augment_values(window.values, pipe, rng), window.participant_id,
                  dict(window.labels), window.split)


def view_pair_values(values: np.ndarray, pipe: Pipeline, seed) -> tuple[np.ndarray, np.ndarray]:
    """Two independent draws of the pipeline from one derived seed."""
    first, second = _as_seedseq(seed).spawn(2)
    return (augment_values(values, pipe, np.random.default_rng(first)),
            augment_values(values, pipe, np.random.default_rng(second)))


def make_view_pair(window: Window, pipe: Pipeline, seed) -> tuple[Window, Window]:
    a, b = view_pair_values(window.values, pipe, seed)
    return (Window(a, window.participant_id, dict(window.labels), window.split),
            Window(b, window.participant_id, dict(window.labels), window.split))
