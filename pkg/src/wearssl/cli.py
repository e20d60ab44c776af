"""Command line pipeline: generate, preprocess, pretrain, probe, report.

Each stage writes its outputs plus the fully resolved configuration into the
directory given by --out.  Exit status: 0 on success, 2 for configuration or
usage errors, 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys

import numpy as np

from . import byol as byol_mod
from . import simclr as simclr_mod
from . import supervised as sup_mod
from .augment import deterministic_prefix
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, dump_config, load_config
from .data.preprocess import SPLITS, WindowSet, load_windows, preprocess, save_windows
from .data.records import TASKS, parse_actigraphy_csv, write_actigraphy_csv
from .data.synthetic import generate_synthetic
from .evaluation import (aggregate_runs, embeddings_by_split, evaluate_probe,
                         fit_probe, fit_probe_select)

METHODS = ("simclr", "byol", "supervised", "random")
METRICS = ("macro_f1", "micro_f1")


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_resolved(config: RunConfig, out_dir: str):
    with open(os.path.join(out_dir, "config.resolved.ini"), "w",
              encoding="utf-8") as fh:
        fh.write(dump_config(config))


def _write_history(path: str, history: list[float]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("epoch", "loss"))
        for epoch, loss in enumerate(history):
            writer.writerow((epoch, repr(float(loss))))


def split_fingerprint(ws: WindowSet) -> str:
    payload = json.dumps({s: list(ws.split_ids[s]) for s in SPLITS},
                         sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


# -- subcommands -------------------------------------------------------------


def cmd_generate(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.data.seed = args.seed
    out = _ensure_out(args.out)
    records = generate_synthetic(config.data)
    write_actigraphy_csv(records,
                         os.path.join(out, "actigraphy.csv"),
                         os.path.join(out, "labels.csv"))
    _write_resolved(config, out)
    print(f"wrote {len(records)} participants "
          f"({config.data.n_samples()} samples each) to {out}")
    return 0


def cmd_preprocess(args) -> int:
    config = load_config(args.config)
    for path in (args.data, args.labels):
        if not os.path.exists(path):
            raise ConfigError(f"input file not found: {path}")
    records = parse_actigraphy_csv(args.data, args.labels)
    ws = preprocess(records, config.preprocess)
    out = _ensure_out(args.out)
    save_windows(os.path.join(out, "windows.wssl"), ws)
    _write_resolved(config, out)
    sizes = {s: len(ws.by_split(s)) for s in SPLITS}
    print(f"windows: {len(ws.windows)} {sizes}; imputed samples: {ws.n_imputed}; "
          f"excluded participants: {list(ws.excluded) or 'none'}")
    return 0


def _load_window_store(path: str) -> WindowSet:
    if not os.path.exists(path):
        raise ConfigError(f"window store not found: {path}")
    return load_windows(path)


def _train_values(ws: WindowSet) -> np.ndarray:
    return np.stack([w.values for w in ws.by_split("train")]).astype(np.float64)


def cmd_pretrain(args) -> int:
    config = load_config(args.config)
    if args.method == "supervised":
        raise ConfigError(
            "the supervised baseline trains during `probe --method supervised`; "
            "pretrain takes --method simclr or byol")
    ws = _load_window_store(args.windows)
    train = _train_values(ws)
    out = _ensure_out(args.out)
    seed = config.seed if args.seed is None else args.seed

    if args.method == "simclr":
        cfg = dataclasses.replace(config.simclr, seed=seed)
        groups = np.array([w.participant_id for w in ws.by_split("train")])
        model, history = simclr_mod.train_simclr(train, cfg, groups=groups)
        save_checkpoint(os.path.join(out, "checkpoint.wssl"), "simclr",
                        {"encoder": model.encoder, "head": model.head},
                        extra={"seed": seed, "epochs": cfg.epochs,
                               "input_prefix": list(model.input_prefix),
                               "windows": split_fingerprint(ws)})
    else:
        cfg = dataclasses.replace(config.byol, seed=seed)
        rescaler = byol_mod.fit_rescaler(train, cfg.pipeline)
        prefix = deterministic_prefix(cfg.pipeline)
        encoder_init = None
        if config.ae_warmstart:
            ae_cfg = dataclasses.replace(config.autoencoder, seed=seed)
            flat = byol_mod.flatten_windows(train, rescaler, prefix)
            encoder_init, _, ae_history = byol_mod.pretrain_autoencoder(flat, ae_cfg)
            _write_history(os.path.join(out, "autoencoder_history.csv"), ae_history)
        model, history = byol_mod.train_byol(train, rescaler, cfg, encoder_init)
        save_checkpoint(
            os.path.join(out, "checkpoint.wssl"), "byol",
            {"online_encoder": model.online_encoder,
             "online_projector": model.online_projector,
             "predictor": model.predictor,
             "target_encoder": model.target_encoder,
             "target_projector": model.target_projector},
            extra={"seed": seed, "epochs": cfg.epochs,
                   "windows": split_fingerprint(ws),
                   "input_prefix": list(model.input_prefix),
                   "rescaler": {k: v.tolist() for k, v in rescaler.state().items()}})

    _write_history(os.path.join(out, "loss_history.csv"), history)
    _write_resolved(config, out)
    print(f"{args.method}: {len(history)} epochs, "
          f"loss {history[0]:.4f} -> {history[-1]:.4f}; checkpoint in {out}")
    return 0


def _encode_fn_for(method: str, checkpoint_path: str | None, seed: int):
    """Frozen embedding function for probe methods (not supervised)."""
    if method == "random":
        model = simclr_mod.build_model(seed)
        return lambda v: simclr_mod.encode(model, v)
    if checkpoint_path is None:
        raise ConfigError(f"--checkpoint is required for --method {method}")
    if not os.path.exists(checkpoint_path):
        raise ConfigError(f"checkpoint not found: {checkpoint_path}")
    ck = load_checkpoint(checkpoint_path)
    if ck.kind != method:
        raise ConfigError(
            f"checkpoint {checkpoint_path} holds a {ck.kind!r} model, not {method!r}")
    if method == "simclr":
        model = simclr_mod.SimclrModel(ck.networks["encoder"], ck.networks["head"],
                                       tuple(ck.extra.get("input_prefix", ())))
        return lambda v: simclr_mod.encode(model, v)
    encoder = ck.networks["online_encoder"]
    rescaler = byol_mod.MinMaxRescaler.from_state(
        {k: np.asarray(v, dtype=np.float64) for k, v in ck.extra["rescaler"].items()})
    prefix = tuple(ck.extra.get("input_prefix", ()))
    return lambda v: encoder.forward(byol_mod.flatten_windows(v, rescaler, prefix),
                                     training=False)


def _probe_task(config: RunConfig, data, task: str, seed: int) -> dict:
    (X_tr, y_tr), (X_val, y_val), (X_te, y_te) = (data[s] for s in SPLITS)
    kwargs = dict(max_iter=config.probe.max_iter, tol=config.probe.tol,
                  init_seed=seed)
    if config.probe.select_lambda:
        probe = fit_probe_select(X_tr, y_tr, X_val, y_val, TASKS[task],
                                 lambdas=config.probe.lambdas, **kwargs)
    else:
        probe = fit_probe(X_tr, y_tr, TASKS[task], lam=config.probe.lam, **kwargs)
    metrics = evaluate_probe(probe, X_te, y_te, TASKS[task])
    metrics["lam"] = probe.lam
    metrics["n_iter"] = probe.n_iter
    metrics["converged"] = probe.converged
    return metrics


def _supervised_task(config: RunConfig, ws: WindowSet, task: str, seed: int) -> dict:
    from .evaluation import f1_scores
    train = ws.by_split("train")
    test = ws.by_split("test")
    X_tr = np.stack([w.values for w in train])
    y_tr = np.array([w.labels[task] for w in train], dtype=int)
    X_te = np.stack([w.values for w in test])
    y_te = np.array([w.labels[task] for w in test], dtype=int)
    model, history = sup_mod.train_supervised(
        X_tr, y_tr, config.supervised_config(task, seed))
    metrics = f1_scores(y_te, sup_mod.predict(model, X_te), TASKS[task])
    metrics["final_train_loss"] = history[-1]
    return metrics


def cmd_probe(args) -> int:
    config = load_config(args.config)
    if args.method not in METHODS:
        raise ConfigError(f"unknown method {args.method!r}; choose from {METHODS}")
    tasks = tuple(args.tasks.split(",")) if args.tasks else config.tasks
    unknown = [t for t in tasks if t not in TASKS]
    if unknown:
        raise ConfigError(f"unknown tasks {unknown}")
    ws = _load_window_store(args.windows)
    seed = config.seed if args.seed is None else args.seed
    out = _ensure_out(args.out)

    results = {}
    if args.method == "supervised":
        for task in tasks:
            results[task] = _supervised_task(config, ws, task, seed)
    else:
        encode_fn = _encode_fn_for(args.method, args.checkpoint, seed)
        for task in tasks:
            data = embeddings_by_split(ws, encode_fn, task)
            results[task] = _probe_task(config, data, task, seed)

    payload = {
        "method": args.method,
        "seed": seed,
        "tasks": results,
        "split_fingerprint": split_fingerprint(ws),
        "n_windows": {s: len(ws.by_split(s)) for s in SPLITS},
        "checkpoint": args.checkpoint,
    }
    with open(os.path.join(out, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_resolved(config, out)
    brief = {t: round(results[t]["macro_f1"], 3) for t in tasks}
    print(f"{args.method} seed {seed} test macro-F1: {brief}")
    return 0


def cmd_report(args) -> int:
    config = load_config(args.config)
    runs = []
    for run_dir in args.runs:
        path = os.path.join(run_dir, "metrics.json")
        if not os.path.exists(path):
            raise ConfigError(f"no metrics.json in {run_dir}")
        with open(path, encoding="utf-8") as fh:
            runs.append(json.load(fh))

    fingerprints = {r["split_fingerprint"] for r in runs}
    if len(fingerprints) != 1:
        raise ConfigError(
            f"runs mix {len(fingerprints)} different train/val/test splits; "
            "a report needs one shared split")

    tasks = config.tasks
    cells: dict[str, dict[str, dict[str, list[float]]]] = {}
    seeds: dict[str, set[int]] = {m: set() for m in METHODS}
    for r in runs:
        method = r["method"]
        if method not in METHODS:
            raise ConfigError(f"metrics.json with unknown method {method!r}")
        seeds[method].add(r["seed"])
        for task, metrics in r["tasks"].items():
            cell = cells.setdefault(method, {}).setdefault(
                task, {m: [] for m in METRICS})
            for metric in METRICS:
                cell[metric].append(float(metrics[metric]))

    problems = []
    for method in METHODS:
        for task in tasks:
            values = cells.get(method, {}).get(task)
            n = len(values[METRICS[0]]) if values else 0
            if n != args.expect_runs:
                problems.append(f"{method}/{task}: {n} runs")
    if problems:
        raise ConfigError(
            f"expected exactly {args.expect_runs} runs per method and task; "
            + "; ".join(problems))

    summary = {
        method: {
            task: {
                metric: dict(zip(("mean", "ci95"),
                                 aggregate_runs(cells[method][task][metric])))
                | {"n": len(cells[method][task][metric]),
                   "values": cells[method][task][metric]}
                for metric in METRICS}
            for task in tasks}
        for method in METHODS}

    out = _ensure_out(args.out)
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump({"tasks": list(tasks), "methods": list(METHODS),
                   "runs_per_cell": args.expect_runs,
                   "split_fingerprint": next(iter(fingerprints)),
                   "cells": summary}, fh, sort_keys=True, indent=2)
        fh.write("\n")

    lines = []
    width = max(len(t) for t in tasks) + 2
    for metric in METRICS:
        lines.append(f"== test {metric} (mean +/- 95% CI over "
                     f"{args.expect_runs} runs) ==")
        header = "method".ljust(12) + "".join(t.ljust(max(width, 18)) for t in tasks)
        lines.append(header)
        for method in METHODS:
            row = method.ljust(12)
            for task in tasks:
                cell = summary[method][task][metric]
                row += f"{cell['mean']:.3f} +/- {cell['ci95']:.3f}".ljust(max(width, 18))
            lines.append(row)
        lines.append("")
    table = "\n".join(lines)
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    _write_resolved(config, out)
    print(table)
    return 0


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wearssl",
        description="Self-supervised pretraining and evaluation on "
                    "multichannel actigraphy windows.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic actigraphy CSVs")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("preprocess", help="CSVs -> windowed, split, z-scored store")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("pretrain", help="self-supervised training on train windows")
    p.add_argument("--config", default=None)
    p.add_argument("--method", required=True, choices=("simclr", "byol", "supervised"))
    p.add_argument("--windows", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("probe", help="frozen-encoder linear evaluation")
    p.add_argument("--config", default=None)
    p.add_argument("--method", required=True)
    p.add_argument("--windows", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tasks", default=None,
                   help="comma-separated subset, default: config tasks")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_probe)

    p = sub.add_parser("report", help="aggregate probe runs into one table")
    p.add_argument("--config", default=None)
    p.add_argument("--expect-runs", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("runs", nargs="+", help="probe output directories")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
