"""Minimal end-to-end run: synthesize a cohort, pretrain, probe, compare.

Small on purpose (about a minute of CPU); the CLI drives the full-size
version of the same flow:

    python3 -m wearssl.cli generate --out out/gen ...
"""

import time

import numpy as np

from wearssl import byol as byol_mod
from wearssl import simclr as simclr_mod
from wearssl.data import SyntheticConfig, generate_synthetic, PreprocessConfig, preprocess
from wearssl.data.records import TASKS
from wearssl.evaluation import embeddings_by_split, evaluate_probe, fit_probe

TASKS_SHOWN = ("sleep_apnea", "insomnia")


def probe(ws, encode_fn, task):
    data = embeddings_by_split(ws, encode_fn, task)
    fitted = fit_probe(data["train"][0], data["train"][1], n_classes=TASKS[task])
    return evaluate_probe(fitted, data["test"][0], data["test"][1],
                          n_classes=TASKS[task])["macro_f1"]


def main():
    t0 = time.time()
    prevalences = dict(SyntheticConfig().prevalences,
                       sleep_apnea=(0.5, 0.5), insomnia=(0.34, 0.33, 0.33))
    cfg = SyntheticConfig(n_participants=120, days=0.25, seed=0, start_hour=20.5,
                          prevalences=prevalences)
    ws = preprocess(generate_synthetic(cfg), PreprocessConfig())
    train = np.stack([w.values for w in ws.by_split("train")])
    print(f"cohort: {cfg.n_participants} participants, "
          f"{len(ws.windows)} windows ({time.time()-t0:.0f}s)")

    sc = simclr_mod.SimclrTrainConfig(epochs=20, batch_size=16, base_lr=0.15, seed=0)
    model, losses = simclr_mod.train_simclr(train, sc)
    print(f"simclr pretraining: loss {losses[0]:.3f} -> {losses[-1]:.3f} "
          f"({time.time()-t0:.0f}s)")

    resc = byol_mod.fit_rescaler(train)
    bc = byol_mod.ByolTrainConfig(epochs=20, batch_size=16, base_lr=1e-3, seed=0)
    rows = byol_mod.flatten_windows(train, resc, byol_mod.deterministic_prefix(bc.pipeline))
    enc_init, _, _ = byol_mod.pretrain_autoencoder(
        rows, byol_mod.AutoencoderConfig(epochs=10, seed=0))
    bmodel, blosses = byol_mod.train_byol(train, resc, bc, encoder_init=enc_init)
    print(f"byol pretraining:   loss {blosses[0]:.4f} -> {blosses[-1]:.4f} "
          f"({time.time()-t0:.0f}s)")

    encoders = {
        "simclr": lambda w: simclr_mod.encode(model, w),
        "byol": lambda w: byol_mod.encode(bmodel, w, resc),
        "random": lambda w: simclr_mod.encode(simclr_mod.build_model(seed=99), w),
    }
    print(f"\nfrozen-encoder linear probes (test macro-F1):")
    header = "".join(f"{t:>20}" for t in TASKS_SHOWN)
    print(f"{'encoder':<10}{header}")
    for name, fn in encoders.items():
        row = "".join(f"{probe(ws, fn, t):>20.3f}" for t in TASKS_SHOWN)
        print(f"{name:<10}{row}")
    print(f"\ntotal {time.time()-t0:.0f}s")


if __name__ == "__main__":
    main()
