"""Synthetic actigraphy: circadian traces with planted, label-dependent structure.

Every participant shares the same circadian background: a rectified 24 h
sinusoidal activity drive with noisy daytime texture, light that tracks the
drive, and a sleep flag thresholded on circadian phase.  On top of that each
participant draws class-independent intensity gains per motif family (how
often they fidget, turn over, and so on), which gives every record a stable
identity without touching the labels.

Labels act through two kinds of planted structure.  Sparse nocturnal
*motif* events carry the first kind: each family has a fixed envelope
length and height band, every episode oscillates, and the class changes the
oscillation period inside the envelope.  Each participant also speeds or
slows every family's rhythm by a personal tempo factor in [0.9, 1.1], drawn
independently of all labels.  Tempo makes rhythm frequency a continuous,
label-free identity axis, so representation learners that separate
individuals are pulled toward exactly the filter bank the classes live in.
The rhythm crest is pinned to the envelope crest and envelope lengths are
odd, so the peak sample equals the drawn height exactly for every period
and the episode's mass barely moves with its period.  For diabetes and
sleep apnea the rhythm is the *only* thing the label touches; no level,
mass, or footprint statistic a fixed filter bank could read separates
their classes:

  insomnia            restless turning episodes, envelope 41:
                      period 4 / 12 / 6 (classes 0/1/2)
  diabetes            leg-movement bursts, envelope 51:
                      period 4.8 / 8 / 16
  sleep_apnea         arousal complexes, envelope 57: period 6 / 12
  metabolic_syndrome  strain swells, envelope 33: period 4 / 7
  hypertension        breathing-effort swells, envelope 63: period 6 / 24

Within a participant the period options stay separated by factors >= 1.5
(the tempo factor scales them together), the slow rhythms (>= 12) ride only
the long envelopes (>= 41) so several cycles always fit, and every envelope
holds at least two full cycles of its slowest rhythm at the slowest tempo.

The second kind of structure is global: three conditions also shift how
whole stretches of the record behave, the way they do on real actigraphy.
Hypertensive sleep carries more breathing-effort swells, more arousal
complexes, and a raised quiet-night floor (the non-dipping pattern).  Metabolic syndrome brings
more strain swells, evening light that lingers toward bedtime, and a
rougher night floor.  Insomniac settling-in stays restless, with more
turning episodes between bedtime and sleep onset.  These cues live in
event counts and in the levels of the dominant phase-locked parts of the
trace, they sit inside the spread of the matching identity gains, and they
give encoders without any translation machinery something honest to read.
Turning episodes also flick the sleep flag for a few samples; the flick is
identical for every class and is texture, not signal.

``class_effect_scale`` blends each participant's motifs between the class-0
shape (scale 0) and their own class shape (scale 1), so at 0 the traces are
independent of the labels (the permutation null).  Each motif family draws
from its own seeded stream with label-independent consumption, which keeps
generation reproducible sample for sample and keeps the null exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..util import derive_rng
from .records import CADENCE_SECONDS, DEFAULT_PREVALENCES, TASKS, ParticipantRecord

EPOCH0 = 1578268800  # 2020-01-06T00:00:00Z, keeps timestamps reproducible

# class period options per motif family; a per-participant tempo factor in
# [0.9, 1.1] scales a family's options together, so their ratios never move
FAMILY_PERIODS = {
    "turns": (4.0, 12.0, 6.0),
    "legs": (4.8, 8.0, 16.0),
    "arousal": (6.0, 12.0),
    "strain": (4.0, 7.0),
    "effort": (6.0, 24.0),
}
SAMPLES_PER_HOUR = 3600 // CADENCE_SECONDS
BEDTIME_HOUR = 22.0
WAKE_HOUR = 6.0
ONSET_HOURS = 2.0 / 3.0          # settling-in period after bedtime, 40 min
ONSET_SAMPLES = int(ONSET_HOURS * SAMPLES_PER_HOUR)
FULL_NIGHT_SAMPLES = int((24.0 - BEDTIME_HOUR + WAKE_HOUR - ONSET_HOURS)
                         * SAMPLES_PER_HOUR)


@dataclass
class SyntheticConfig:
    n_participants: int = 100
    days: float = 7.0
    seed: int = 0
    prevalences: dict[str, tuple[float, ...]] = field(
        default_factory=lambda: {k: tuple(v) for k, v in DEFAULT_PREVALENCES.items()})
    class_effect_scale: float = 1.0
    noise_scale: float = 1.0
    start_hour: float = 0.0
    participant_prefix: str = "P"

    def __post_init__(self):
        if self.n_participants < 1:
            raise ValueError("n_participants must be >= 1")
        if self.days <= 0:
            raise ValueError("days must be > 0")
        if set(self.prevalences) != set(TASKS):
            raise ValueError(f"prevalences must cover exactly the tasks {sorted(TASKS)}")
        for task, probs in self.prevalences.items():
            if len(probs) != TASKS[task]:
                raise ValueError(f"{task}: expected {TASKS[task]} class probabilities")
            if any(not 0.0 < p < 1.0 for p in probs):
                raise ValueError(f"{task}: probabilities must lie in (0, 1)")
            if abs(sum(probs) - 1.0) > 1e-9:
                raise ValueError(f"{task}: probabilities must sum to 1, got {sum(probs)}")

    def n_samples(self) -> int:
        return int(round(self.days * 24 * SAMPLES_PER_HOUR))


def draw_labels(config: SyntheticConfig, index: int) -> dict[str, int]:
    rng = derive_rng(config.seed, "labels", index)
    return {task: int(rng.choice(len(probs), p=np.asarray(probs)))
            for task, probs in sorted(config.prevalences.items())}


# -- motif templates -----------------------------------------------------------

def _bump(width: int, height: float) -> np.ndarray:
    """Smooth symmetric lobe, zero at both ends."""
    return height * np.sin(np.linspace(0.0, np.pi, width)) ** 2


def _episode(length: int, height: float, period: float) -> np.ndarray:
    """Movement episode: an envelope carrying a rhythm at the given period.

    The rhythm crest is pinned to the envelope crest, so with odd lengths
    the peak sample is exactly the height no matter the period; the rhythm
    is the only thing that separates the classes.
    """
    envelope = np.sin(np.linspace(0.0, np.pi, length)) ** 2
    t = np.arange(length) - (length - 1) / 2.0
    return height * envelope * (1.0 + 0.5 * np.cos(2.0 * np.pi * t / period)) / 1.5


def _blend(base: np.ndarray, morphed: np.ndarray, s: float) -> np.ndarray:
    width = max(base.size, morphed.size)
    out = np.zeros(width)
    out[:base.size] += (1.0 - s) * base
    out[:morphed.size] += s * morphed
    return out


def _slot_starts(rng, lo: int, hi: int, n_max: int, footprint: int) -> np.ndarray:
    """n_max candidate starts on an even slot grid with in-slot jitter.

    Always draws n_max uniforms so stream consumption never depends on how
    many events are later realized.
    """
    jitter = rng.random(n_max)
    if hi - lo < footprint or n_max < 1:
        return np.empty(0, dtype=int)
    edges = np.linspace(lo, hi - footprint, n_max + 1)
    starts = edges[:-1] + jitter * np.maximum(edges[1:] - edges[:-1] - 1, 0.0)
    return starts.astype(int)


def _add(trace: np.ndarray, start: int, shape: np.ndarray):
    stop = min(start + shape.size, trace.size)
    if stop > start >= 0:
        trace[start:stop] += shape[:stop - start]


def _scaled_count(base: float, region: int, full: int = FULL_NIGHT_SAMPLES) -> int:
    """Events per region, proportional to the full-region rate."""
    return max(1, int(round(base * region / full))) if region > 0 else 0


# -- trace assembly --------------------------------------------------------------

def _day_regions(config: SyntheticConfig, n: int):
    """(onset, night) absolute sample ranges for every day the record touches."""
    out = []
    first_day = int(np.floor((config.start_hour - 24.0) / 24.0))
    last_day = int(np.ceil((config.start_hour + config.days * 24.0) / 24.0)) + 1
    for day in range(first_day, last_day):
        bed_h = day * 24.0 + BEDTIME_HOUR - config.start_hour
        onset = (int(round(bed_h * SAMPLES_PER_HOUR)),
                 int(round((bed_h + ONSET_HOURS) * SAMPLES_PER_HOUR)))
        night = (onset[1],
                 int(round((day * 24.0 + 24.0 + WAKE_HOUR - config.start_hour)
                           * SAMPLES_PER_HOUR)))
        clip = lambda a, b: (max(a, 0), min(b, n))
        onset, night = clip(*onset), clip(*night)
        if onset[1] > onset[0] or night[1] > night[0]:
            out.append((onset, night))
    return out


def generate_participant_trace(seed: int, labels: dict[str, int],
                               config: SyntheticConfig) -> np.ndarray:
    """(3, n_samples) raw trace; a pure function of (seed, labels, config)."""
    n = config.n_samples()
    s = float(config.class_effect_scale)
    noise = config.noise_scale
    stream = lambda name: derive_rng(int(seed), "family", name)

    hours = config.start_hour + np.arange(n) / SAMPLES_PER_HOUR
    tod = hours % 24.0
    circ = np.sin(2.0 * np.pi * (tod - 8.0) / 24.0)
    drive = np.clip(circ + 0.5, 0.0, None) / 1.5
    asleep = (tod >= BEDTIME_HOUR) | (tod < WAKE_HOUR)
    awake = ~asleep

    diabetes = labels["diabetes"]
    apnea = labels["sleep_apnea"]
    insomnia = labels["insomnia"]
    hypertension = labels["hypertension"]
    metabolic = labels["metabolic_syndrome"]

    # global profile effects, all blended by the effect scale: hypertensive
    # sleep gains effort swells and loses its night dip, metabolic sleep
    # gains strain swells, lingering evening light, and a rougher floor,
    # insomniac settling-in stays restless; diabetes and apnea act through
    # episode rhythm alone
    floor_mult = 1.0 + 0.5 * s * hypertension
    light_expo = 1.2 - 0.15 * s * metabolic
    sigma_mult = 1.0 + 0.6 * s * metabolic
    onset_mult = 1.0 + s * ((1.0, 2.4, 1.7)[insomnia] - 1.0)
    count_cues = {"effort": 1.0 + 0.4 * s * hypertension,
                  "arousal": 1.0 + 0.35 * s * hypertension,
                  "strain": 1.0 + 0.45 * s * metabolic}

    # background: identical in distribution for every class
    base_rng = stream("background")
    day_gain = 0.85 + 0.3 * base_rng.random()
    activity = np.zeros(n)
    day_level = day_gain * (3.0 * drive ** 0.7 + 0.15)
    activity[awake] = day_level[awake] * (
        1.0 + noise * 0.30 * base_rng.normal(size=int(awake.sum())))

    # quiet-night floor: white noise with a per-participant smoothness mix,
    # identical in distribution for every class
    floor_rng = stream("floor")
    floor_gain = 0.8 + 0.4 * floor_rng.random()
    raw_floor = floor_rng.normal(size=n)
    kernel = np.ones(8) / 8.0
    smooth_floor = np.convolve(raw_floor, kernel, mode="same")
    smooth_floor *= np.std(raw_floor) / max(np.std(smooth_floor), 1e-12)
    floor_mix = floor_rng.random()
    blended = (1.0 - floor_mix) * raw_floor + floor_mix * smooth_floor
    sd = np.std(blended)
    if sd > 1e-12:
        blended = blended / sd
    night_floor = floor_mult * floor_gain * (
        0.03 + noise * 0.02 * sigma_mult * np.abs(blended))
    activity[asleep] = night_floor[asleep]

    light = np.zeros(n)
    light_rng = stream("light")
    light_gain = 0.85 + 0.3 * light_rng.random()
    light[awake] = (light_gain * 50.0 * drive[awake] ** light_expo
                    * (1.0 + noise * 0.25 * light_rng.normal(size=int(awake.sum()))))
    evening = awake & ((tod >= 18.0) | (tod < WAKE_HOUR))
    light[evening] += (light_gain * 3.0
                       * (1.0 + noise * 0.2 * light_rng.normal(size=int(evening.sum()))))
    light += 0.05

    sleep_wake = asleep.astype(np.float64)
    flicker_rng = stream("flicker")
    flicker_mask = asleep & (flicker_rng.random(n) < 0.003)
    sleep_wake[flicker_mask] = 0.0

    # -- nocturnal motif families -------------------------------------------
    # each family draws class-independent per-participant gains first, so the
    # cohort varies in how much of each motif it shows without leaking labels.
    # family table: (stream, envelope, height band, slot count, rate, class-0
    # period, this participant's period); the class picks the period, never
    # the level
    periods = FAMILY_PERIODS
    families = {
        "turns": (stream("turns"), 41, (0.45, 0.10), 8, 4.0, 4.0,
                  periods["turns"][insomnia]),
        "legs": (stream("legs"), 51, (0.62, 0.14), 10, 5.0, 4.8,
                 periods["legs"][diabetes]),
        "arousal": (stream("arousal"), 57, (0.85, 0.20), 8, 4.0, 6.0,
                    periods["arousal"][apnea]),
        "strain": (stream("strain"), 33, (0.50, 0.12), 6, 3.0, 4.0,
                   periods["strain"][metabolic]),
        "effort": (stream("effort"), 63, (0.30, 0.08), 5, 3.0, 6.0,
                   periods["effort"][hypertension]),
    }
    gains = {name: (0.75 + 0.5 * fam[0].random(), 0.8 + 0.4 * fam[0].random())
             for name, fam in families.items()}
    tempos = {name: 0.9 + 0.2 * fam[0].random() for name, fam in families.items()}

    for (onset_lo, onset_hi), (night_lo, night_hi) in _day_regions(config, n):
        night_len = night_hi - night_lo
        for offset, (name, fam) in enumerate(families.items()):
            rng, env_len, (h_lo, h_span), n_slots, rate, period0, period = fam
            count_mult, height_mult = gains[name]
            count_mult *= count_cues.get(name, 1.0)
            tempo = tempos[name]
            regions = [(night_lo + 3 * offset, night_hi, night_len)]
            if name == "turns":  # settling-in fidgets before sleep consolidates
                regions.insert(0, (onset_lo, onset_hi, onset_hi - onset_lo))
            for lo, hi, length in regions:
                starts = _slot_starts(rng, lo, hi, n_slots, env_len + 2)
                heights = height_mult * (h_lo + h_span * rng.random(n_slots))
                full = ONSET_SAMPLES if hi == onset_hi else FULL_NIGHT_SAMPLES
                scale_rate = rate if full == FULL_NIGHT_SAMPLES else 2.0 * onset_mult
                count = min(_scaled_count(scale_rate * count_mult, length, full),
                            starts.size)
                for k in range(count):
                    base_shape = _episode(env_len, heights[k], period0 * tempo)
                    morphed = _episode(env_len, heights[k], period * tempo)
                    _add(activity, starts[k], _blend(base_shape, morphed, s))
                    if name == "turns":  # class-free wake flick texture
                        sleep_wake[starts[k]:starts[k] + 4] = 0.0

    activity = np.clip(activity, 0.0, None)
    light = np.clip(light, 0.0, None)
    return np.vstack([activity, light, sleep_wake])


def participant_seed(config: SyntheticConfig, index: int) -> int:
    return int(derive_rng(config.seed, "participant-seed", index)
               .integers(0, 2 ** 63))


def generate_synthetic(config: SyntheticConfig) -> list[ParticipantRecord]:
    """Per-participant records at 30 s cadence with labels drawn at the
    configured prevalences; fully determined by the config seed."""
    n_samples = config.n_samples()
    t0 = EPOCH0 + int(round(config.start_hour * 3600))
    times = t0 + CADENCE_SECONDS * np.arange(n_samples, dtype=np.int64)
    records = []
    width = max(4, len(str(config.n_participants)))
    for i in range(config.n_participants):
        labels = draw_labels(config, i)
        values = generate_participant_trace(participant_seed(config, i),
                                            labels, config)
        pid = f"{config.participant_prefix}{i:0{width}d}"
        records.append(ParticipantRecord(pid, times.copy(), values, labels))
    return records
