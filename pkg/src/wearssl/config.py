"""INI run configuration: one file drives every pipeline stage.

Sections are optional; every key has a default.  Unknown sections or keys
are rejected so typos fail fast, and every consumer serializes the fully
resolved configuration next to its outputs.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .augment import format_pipeline, parse_pipeline
from .byol import AutoencoderConfig, ByolTrainConfig
from .data.preprocess import PreprocessConfig
from .data.records import TASKS
from .data.synthetic import SyntheticConfig
from .evaluation import PROBE_LAMBDAS
from .simclr import SimclrTrainConfig
from .supervised import SupervisedConfig


class ConfigError(Exception):
    """Malformed configuration or command usage; maps to exit status 2."""


@dataclass
class ProbeConfig:
    lam: float = 1e-4
    select_lambda: bool = False
    lambdas: tuple[float, ...] = PROBE_LAMBDAS
    max_iter: int = 5000
    tol: float = 1e-5

    def __post_init__(self):
        if self.lam < 0 or self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("probe: lam >= 0, tol > 0, max_iter >= 1 required")
        if not self.lambdas or any(l < 0 for l in self.lambdas):
            raise ConfigError("probe: lambdas must be non-empty and >= 0")


@dataclass
class RunConfig:
    seed: int = 0
    tasks: tuple[str, ...] = tuple(sorted(TASKS))
    data: SyntheticConfig = field(default_factory=SyntheticConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    simclr: SimclrTrainConfig = field(
        default_factory=lambda: SimclrTrainConfig(batch_size=64))
    byol: ByolTrainConfig = field(
        default_factory=lambda: ByolTrainConfig(batch_size=64))
    autoencoder: AutoencoderConfig = field(default_factory=AutoencoderConfig)
    ae_warmstart: bool = True  # False starts the online encoder from random init
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    supervised_epochs: int = 50
    supervised_batch_size: int = 64
    supervised_lr: float = 1e-3

    def supervised_config(self, task: str, seed: int | None = None) -> SupervisedConfig:
        return SupervisedConfig(task, epochs=self.supervised_epochs,
                                batch_size=self.supervised_batch_size,
                                learning_rate=self.supervised_lr,
                                dropout=self.simclr.dropout,
                                seed=self.seed if seed is None else seed)


_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def _convert(raw: str, kind: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "optfloat":
            return None if raw == "" else float(raw)
        if kind == "bool":
            return _BOOL[raw.lower()]
        if kind == "str":
            return raw
        if kind == "floats":
            return tuple(float(p) for p in raw.split(","))
        if kind == "strs":
            return tuple(p.strip() for p in raw.split(",") if p.strip())
        if kind == "pipeline":
            return parse_pipeline(raw)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"cannot parse {raw!r} as {kind}: {exc}") from None
    raise AssertionError(f"unknown kind {kind}")


# section -> key -> (type, target attribute path)
_SCHEMA = {
    "run": {
        "seed": ("int", "seed"),
        "tasks": ("strs", "tasks"),
    },
    "data": {
        "n_participants": ("int", "data.n_participants"),
        "days": ("float", "data.days"),
        "seed": ("int", "data.seed"),
        "class_effect_scale": ("float", "data.class_effect_scale"),
        "noise_scale": ("float", "data.noise_scale"),
        "start_hour": ("float", "data.start_hour"),
        **{f"prevalence_{t}": ("floats", f"data.prevalences[{t}]") for t in TASKS},
    },
    "preprocess": {
        "window_length": ("int", "preprocess.window_length"),
        "max_gap": ("int", "preprocess.max_gap"),
        "val_fraction": ("float", "preprocess.val_fraction"),
        "test_fraction": ("float", "preprocess.test_fraction"),
        "split_seed": ("int", "preprocess.split_seed"),
        "zscore": ("bool", "preprocess.zscore"),
    },
    "simclr": {
        "epochs": ("int", "simclr.epochs"),
        "batch_size": ("int", "simclr.batch_size"),
        "temperature": ("float", "simclr.temperature"),
        "base_lr": ("optfloat", "simclr.base_lr"),
        "dropout": ("float", "simclr.dropout"),
        "pipeline": ("pipeline", "simclr.pipeline"),
    },
    "byol": {
        "epochs": ("int", "byol.epochs"),
        "batch_size": ("int", "byol.batch_size"),
        "base_lr": ("optfloat", "byol.base_lr"),
        "ema": ("float", "byol.beta"),
        "optimizer": ("str", "byol.optimizer"),
        "normalize_loss": ("bool", "byol.normalize_loss"),
        "pipeline": ("pipeline", "byol.pipeline"),
        "ae_warmstart": ("bool", "ae_warmstart"),
        "ae_epochs": ("int", "autoencoder.epochs"),
        "ae_batch_size": ("int", "autoencoder.batch_size"),
        "ae_lr": ("float", "autoencoder.lr"),
    },
    "probe": {
        "lam": ("float", "probe.lam"),
        "select_lambda": ("bool", "probe.select_lambda"),
        "lambdas": ("floats", "probe.lambdas"),
        "max_iter": ("int", "probe.max_iter"),
        "tol": ("float", "probe.tol"),
    },
    "supervised": {
        "epochs": ("int", "supervised_epochs"),
        "batch_size": ("int", "supervised_batch_size"),
        "learning_rate": ("float", "supervised_lr"),
    },
}


def _assign(config: RunConfig, path: str, value):
    if "[" in path:
        attr_path, key = path[:-1].split("[")
        obj = config
        *parents, last = attr_path.split(".")
        for name in parents:
            obj = getattr(obj, name)
        getattr(obj, last)[key] = value
        return
    obj = config
    *parents, last = path.split(".")
    for name in parents:
        obj = getattr(obj, name)
    setattr(obj, last, value)


def load_config(path: str | None) -> RunConfig:
    """Parse an INI file into a RunConfig; ``None`` yields pure defaults."""
    config = RunConfig()
    if path is None:
        _validate(config)
        return config
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            kind, target = _SCHEMA[section][key]
            try:
                _assign(config, target, _convert(raw, kind))
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"{path}: [{section}] {key}: {exc}") from None
    _validate(config)
    return config


def _validate(config: RunConfig):
    if not config.tasks:
        raise ConfigError("run: tasks must not be empty")
    unknown = [t for t in config.tasks if t not in TASKS]
    if unknown:
        raise ConfigError(f"run: unknown tasks {unknown}; known: {sorted(TASKS)}")
    if len(set(config.tasks)) != len(config.tasks):
        raise ConfigError("run: duplicate tasks")
    try:
        # re-run dataclass validation on any overridden values
        SyntheticConfig(**{k: getattr(config.data, k) for k in (
            "n_participants", "days", "seed", "prevalences",
            "class_effect_scale", "noise_scale", "start_hour")})
        PreprocessConfig(**{k: getattr(config.preprocess, k) for k in (
            "window_length", "max_gap", "val_fraction", "test_fraction",
            "split_seed", "zscore")})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if config.simclr.epochs < 1 or config.byol.epochs < 1:
        raise ConfigError("epochs must be >= 1")
    if config.simclr.batch_size < 2:
        raise ConfigError("simclr: batch_size must be >= 2")
    if config.byol.batch_size < 1:
        raise ConfigError("byol: batch_size must be >= 1")
    if not 0.0 < config.simclr.temperature:
        raise ConfigError("simclr: temperature must be > 0")
    if not 0.0 <= config.byol.beta <= 1.0:
        raise ConfigError("byol: ema must lie in [0, 1]")
    if config.byol.optimizer not in ("adam", "lars"):
        raise ConfigError(f"byol: unknown optimizer {config.byol.optimizer!r}")
    if config.supervised_epochs < 1 or config.supervised_batch_size < 1:
        raise ConfigError("supervised: epochs and batch_size must be >= 1")
    if config.supervised_lr <= 0:
        raise ConfigError("supervised: learning_rate must be > 0")
    ProbeConfig(**{k: getattr(config.probe, k) for k in (
        "lam", "select_lambda", "lambdas", "max_iter", "tol")})
    for pl, who in ((config.simclr.pipeline, "simclr"), (config.byol.pipeline, "byol")):
        try:
            pl.validate(config.preprocess.window_length)
        except ValueError as exc:
            raise ConfigError(f"{who}: {exc}") from None


def dump_config(config: RunConfig) -> str:
    """Serialize the fully resolved configuration as INI text."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["run"] = {
        "seed": str(config.seed),
        "tasks": ", ".join(config.tasks),
    }
    parser["data"] = {
        "n_participants": str(config.data.n_participants),
        "days": repr(config.data.days),
        "seed": str(config.data.seed),
        "class_effect_scale": repr(config.data.class_effect_scale),
        "noise_scale": repr(config.data.noise_scale),
        "start_hour": repr(config.data.start_hour),
        **{f"prevalence_{t}": ", ".join(repr(p) for p in config.data.prevalences[t])
           for t in sorted(config.data.prevalences)},
    }
    parser["preprocess"] = {
        "window_length": str(config.preprocess.window_length),
        "max_gap": str(config.preprocess.max_gap),
        "val_fraction": repr(config.preprocess.val_fraction),
        "test_fraction": repr(config.preprocess.test_fraction),
        "split_seed": str(config.preprocess.split_seed),
        "zscore": str(config.preprocess.zscore).lower(),
    }
    parser["simclr"] = {
        "epochs": str(config.simclr.epochs),
        "batch_size": str(config.simclr.batch_size),
        "temperature": repr(config.simclr.temperature),
        "base_lr": "" if config.simclr.base_lr is None else repr(config.simclr.base_lr),
        "dropout": repr(config.simclr.dropout),
        "pipeline": format_pipeline(config.simclr.pipeline),
    }
    parser["byol"] = {
        "epochs": str(config.byol.epochs),
        "batch_size": str(config.byol.batch_size),
        "base_lr": "" if config.byol.base_lr is None else repr(config.byol.base_lr),
        "ema": repr(config.byol.beta),
        "optimizer": config.byol.optimizer,
        "normalize_loss": str(config.byol.normalize_loss).lower(),
        "pipeline": format_pipeline(config.byol.pipeline),
        "ae_warmstart": str(config.ae_warmstart).lower(),
        "ae_epochs": str(config.autoencoder.epochs),
        "ae_batch_size": str(config.autoencoder.batch_size),
        "ae_lr": repr(config.autoencoder.lr),
    }
    parser["probe"] = {
        "lam": repr(config.probe.lam),
        "select_lambda": str(config.probe.select_lambda).lower(),
        "lambdas": ", ".join(repr(v) for v in config.probe.lambdas),
        "max_iter": str(config.probe.max_iter),
        "tol": repr(config.probe.tol),
    }
    parser["supervised"] = {
        "epochs": str(config.supervised_epochs),
        "batch_size": str(config.supervised_batch_size),
        "learning_rate": repr(config.supervised_lr),
    }
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()
