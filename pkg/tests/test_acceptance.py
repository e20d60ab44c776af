"""End-to-end acceptance suite: one test per shipped guarantee.

Each test prints a single PASS line under ``pytest -v``.  The first three
and the metric test are fast; the end-to-end tests pretrain both methods
at full budget on the synthetic cohort and take several minutes each.
"""

import hashlib
import math
import os
import time

import numpy as np
import pytest
from scipy import stats

from gradcases import byol_grad_case, layer_grad_case, ntxent_grad_case
from oracles import byol_loss_reference, f1_reference, nt_xent_reference
from wearssl import byol as byol_mod
from wearssl.augment import (
    channel_shuffle,
    deterministic_prefix,
    gaussian_noise,
    negate,
    scale,
    segment_permute,
    time_reverse,
    time_warp,
    time_warp_remap,
)
from wearssl.byol import (AutoencoderConfig, ByolTrainConfig, build_byol_model, fit_rescaler,
                          flatten_windows, pretrain_autoencoder, train_byol)
from wearssl.cli import main
from wearssl.data import (
    PreprocessConfig,
    SyntheticConfig,
    generate_synthetic,
    preprocess,
)
from wearssl.data.records import TASKS
from wearssl.evaluation import embeddings_by_split, evaluate_probe, fit_probe
from wearssl.nn.layers import LAYER_KINDS
from wearssl.simclr import SimclrTrainConfig, build_model, encode, nt_xent, train_simclr

# -- frozen acceptance configuration -------------------------------------------
# 320 participants x 0.5 days x 0.8 train fraction = 512 train windows,
# 8 steps per epoch at batch 64.
DATA_CFG = SyntheticConfig(n_participants=320, days=0.5, seed=0, start_hour=20.5)
SPLIT_CFG = PreprocessConfig(split_seed=0)
SIMCLR_CFG = SimclrTrainConfig(epochs=50, batch_size=64, base_lr=0.075, seed=0)
BYOL_CFG = ByolTrainConfig(epochs=50, batch_size=64, seed=0)
AE_CFG = AutoencoderConfig(epochs=30, batch_size=64, lr=1e-3, seed=0)
N_EVAL_SEEDS = 10
BUDGET_SECONDS = 600.0


def _report_line(name: str, detail: str):
    print(f"[acceptance] {name}: PASS ({detail})")


# -- shared artifacts -----------------------------------------------------------

@pytest.fixture(scope="module")
def dataset():
    ws = preprocess(generate_synthetic(DATA_CFG), SPLIT_CFG)
    train = np.stack([w.values for w in ws.by_split("train")]).astype(np.float64)
    return ws, train


@pytest.fixture(scope="module")
def simclr_run(dataset):
    ws, train = dataset
    groups = np.array([w.participant_id for w in ws.by_split("train")])
    t0 = time.perf_counter()
    model, history = train_simclr(train, SIMCLR_CFG, groups=groups)
    return model, history, time.perf_counter() - t0


@pytest.fixture(scope="module")
def byol_run(dataset):
    _, train = dataset
    rescaler = fit_rescaler(train, BYOL_CFG.pipeline)
    input_dim = train.shape[1] * train.shape[2]

    t0 = time.perf_counter()
    flat = flatten_windows(train, rescaler, deterministic_prefix(BYOL_CFG.pipeline))
    encoder_init, _, _ = pretrain_autoencoder(flat, AE_CFG)

    # independent replay of the target-network EMA recurrence, advanced one
    # step at a time from the same deterministic initialization
    replay_start = build_byol_model(input_dim, BYOL_CFG, encoder_init.copy())
    replayed = {k: v.copy() for k, v in replay_start.target_params().items()}
    hashes: list[tuple[str, str]] = []

    def digest(params: dict) -> str:
        h = hashlib.sha256()
        for key in sorted(params):
            h.update(key.encode())
            h.update(params[key].tobytes())
        return h.hexdigest()

    def hook(step, model, loss):
        online = model.ema_tracked_online()
        for k in replayed:
            replayed[k] = BYOL_CFG.beta * replayed[k] + (1.0 - BYOL_CFG.beta) * online[k]
        if step % 10 == 0:
            hashes.append((digest(model.target_params()), digest(replayed)))

    model, history = train_byol(train, rescaler, BYOL_CFG, encoder_init, step_hook=hook)
    return model, history, time.perf_counter() - t0, rescaler, hashes


def _probe_macro_f1(ws, encode_fn, task: str, seed: int) -> float:
    data = embeddings_by_split(ws, encode_fn, task)
    probe = fit_probe(data["train"][0], data["train"][1], n_classes=TASKS[task],
                      init_seed=seed)
    return evaluate_probe(probe, data["test"][0], data["test"][1],
                          n_classes=TASKS[task])["macro_f1"]


def _mean_margins(ws, trained_fn, random_fn_for_seed) -> dict[str, float]:
    """Mean trained-probe F1 minus mean random-encoder F1, per task."""
    margins = {}
    for task in sorted(TASKS):
        trained = [_probe_macro_f1(ws, trained_fn, task, seed)
                   for seed in range(N_EVAL_SEEDS)]
        rand = [_probe_macro_f1(ws, random_fn_for_seed(seed), task, seed)
                for seed in range(N_EVAL_SEEDS)]
        margins[task] = float(np.mean(trained) - np.mean(rand))
    return margins


# -- criterion 1: gradient suite -------------------------------------------------

def test_criterion_1_gradient_suite():
    cases_per_op = 50
    t0 = time.perf_counter()
    worst = {}
    for kind in LAYER_KINDS:
        rng = np.random.default_rng(1000 + LAYER_KINDS.index(kind))
        worst[kind] = max(layer_grad_case(kind, rng) for _ in range(cases_per_op))
    rng = np.random.default_rng(2000)
    worst["nt_xent"] = max(ntxent_grad_case(rng) for _ in range(cases_per_op))
    rng = np.random.default_rng(2001)
    worst["byol_loss"] = max(byol_grad_case(rng) for _ in range(cases_per_op))
    elapsed = time.perf_counter() - t0

    assert max(worst.values()) <= 1e-4, worst
    assert elapsed < 30.0, f"gradient suite took {elapsed:.1f}s"
    _report_line("criterion 1 gradients",
                 f"{len(worst)} ops x {cases_per_op} cases, "
                 f"max rel err {max(worst.values()):.2e}, {elapsed:.1f}s")


# -- criterion 2: loss oracles ----------------------------------------------------

def test_criterion_2_loss_oracles():
    rng = np.random.default_rng(7)
    worst_nt = 0.0
    for n_pairs in range(2, 9):
        for tau in (0.1, 0.5, 1.0):
            for _ in range(5):
                z = rng.normal(size=(2 * n_pairs, 6))
                pairs = np.concatenate([np.arange(n_pairs, 2 * n_pairs),
                                        np.arange(n_pairs)])
                diff = abs(nt_xent(z, pairs, tau) - nt_xent_reference(z, pairs, tau))
                worst_nt = max(worst_nt, diff)
    assert worst_nt <= 1e-10, worst_nt

    worst_byol = 0.0
    for _ in range(50):
        p_v, t_vp, p_vp, t_v = (rng.normal(size=(3, 5)) for _ in range(4))
        got = byol_mod.byol_loss(p_v, t_vp, p_vp, t_v)
        ref = byol_loss_reference(p_v, t_vp, p_vp, t_v)
        worst_byol = max(worst_byol, abs(got - ref))
    assert worst_byol <= 1e-12, worst_byol

    # closed forms: identical rows, and two orthogonal pairs at tau = 0.5
    identical = nt_xent(np.ones((4, 5)), np.array([1, 0, 3, 2]), tau=0.5)
    assert round(identical, 4) == round(math.log(3.0), 4)
    ortho = nt_xent(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]),
                    np.array([1, 0, 3, 2]), tau=0.5)
    assert round(ortho, 4) == 0.2395
    _report_line("criterion 2 loss oracles",
                 f"nt_xent max diff {worst_nt:.1e}, byol max diff {worst_byol:.1e}, "
                 f"closed forms log3/0.2395 ok")


# -- criterion 3: augmentation properties ----------------------------------------

def test_criterion_3_augmentation_properties():
    rng = np.random.default_rng(77)
    n_windows = 1000
    noise_sigma = 0.05
    for _ in range(n_windows):
        c = int(rng.integers(1, 5))
        length = int(rng.integers(16, 80))
        w = rng.normal(size=(c, length))

        assert np.array_equal(negate(negate(w)), w)
        assert np.array_equal(time_reverse(time_reverse(w)), w)

        shuffled = channel_shuffle(w, rng)
        assert shuffled.shape == w.shape
        key = lambda m: sorted(map(tuple, m))
        assert key(shuffled) == key(w)

        permuted = segment_permute(w, rng, n_segments=4)
        assert permuted.shape == w.shape
        assert np.allclose(np.sort(permuted, axis=None), np.sort(w, axis=None))

        remap = time_warp_remap(rng, 4, 0.2, length)
        assert remap[0] == 0.0 and remap[-1] == float(length - 1)
        assert np.all(np.diff(remap) > 0.0)

        noisy = gaussian_noise(w, rng, sigma=noise_sigma)
        assert noisy.shape == w.shape

        scaled = scale(w, rng, mu=1.0, sigma=0.1)
        assert scaled.shape == w.shape
        warped = time_warp(w, rng)
        assert warped.shape == w.shape

    # noise residual std on full-size windows, +/- 20%
    for k in range(20):
        w = np.random.default_rng(500 + k).normal(size=(3, 512))
        resid = gaussian_noise(w, np.random.default_rng(9000 + k),
                               sigma=noise_sigma) - w
        assert abs(resid.std() - noise_sigma) <= 0.2 * noise_sigma

    # per-channel scale factors: mean of 10000 draws within 1.0 +/- 0.005
    ones = np.ones((2, 8))
    draw_rng = np.random.default_rng(41)
    factors = [scale(ones, draw_rng, mu=1.0, sigma=0.1)[i, 0]
               for _ in range(5000) for i in range(2)]
    assert abs(np.mean(factors) - 1.0) <= 0.005
    _report_line("criterion 3 augmentations",
                 f"{n_windows} windows, scale mean {np.mean(factors):.4f}, "
                 f"noise sigma ok")


# -- criterion 4: SimCLR end to end ----------------------------------------------

@pytest.mark.slow
def test_criterion_4_simclr_end_to_end(dataset, simclr_run):
    ws, _ = dataset
    model, history, elapsed = simclr_run
    ratio = history[-1] / history[0]
    assert elapsed < BUDGET_SECONDS, f"{elapsed:.0f}s over budget"
    assert ratio <= 0.7, f"loss ratio {ratio:.3f}"

    margins = _mean_margins(
        ws,
        lambda w: encode(model, w),
        lambda seed: (lambda w, m=build_model(seed=1000 + seed): encode(m, w)))
    n_clear = sum(v >= 0.10 for v in margins.values())
    assert n_clear >= 4, f"margins {margins}"
    _report_line("criterion 4 simclr",
                 f"loss ratio {ratio:.3f}, {elapsed:.0f}s, "
                 f"margins>=0.10 on {n_clear}/5: "
                 + str({t: round(v, 3) for t, v in margins.items()}))


# -- criterion 5: BYOL end to end -------------------------------------------------

@pytest.mark.slow
def test_criterion_5_byol_end_to_end(dataset, byol_run):
    ws, train = dataset
    model, history, elapsed, rescaler, hashes = byol_run
    assert elapsed < BUDGET_SECONDS, f"{elapsed:.0f}s over budget"

    emb = byol_mod.encode(model, train, rescaler)
    alive = float((emb.std(axis=0) > 1e-3).mean())
    assert alive >= 0.5, f"alive fraction {alive:.2f}"

    assert hashes, "no 10th-step hashes recorded"
    mismatches = [i for i, (got, want) in enumerate(hashes) if got != want]
    assert not mismatches, f"EMA replay mismatch at checkpoints {mismatches}"

    input_dim = train.shape[1] * train.shape[2]
    margins = _mean_margins(
        ws,
        lambda w: byol_mod.encode(model, w, rescaler),
        lambda seed: (lambda w, m=build_byol_model(
            input_dim, ByolTrainConfig(seed=1000 + seed)):
            byol_mod.encode(m, w, rescaler)))
    n_clear = sum(v >= 0.05 for v in margins.values())
    assert n_clear >= 3, f"margins {margins}"
    _report_line("criterion 5 byol",
                 f"{elapsed:.0f}s, alive {alive:.2f}, "
                 f"{len(hashes)} EMA checkpoints equal, "
                 f"margins>=0.05 on {n_clear}/5: "
                 + str({t: round(v, 3) for t, v in margins.items()}))


# -- criterion 6: report protocol -------------------------------------------------

REPORT_CONFIG = """\
[run]
seed = 0

[data]
n_participants = 80
days = 0.5
start_hour = 20.5
prevalence_diabetes = 0.4, 0.3, 0.3
prevalence_insomnia = 0.4, 0.3, 0.3
prevalence_sleep_apnea = 0.6, 0.4
prevalence_hypertension = 0.55, 0.45
prevalence_metabolic_syndrome = 0.55, 0.45

[simclr]
epochs = 12
batch_size = 64

[byol]
epochs = 12
batch_size = 64

[supervised]
epochs = 4
"""


@pytest.fixture(scope="module")
def report_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("report")
    cfg = root / "run.ini"
    cfg.write_text(REPORT_CONFIG)
    c = ["--config", str(cfg)]

    assert main(["generate", *c, "--out", str(root / "gen")]) == 0
    assert main(["preprocess", *c,
                 "--data", str(root / "gen" / "actigraphy.csv"),
                 "--labels", str(root / "gen" / "labels.csv"),
                 "--out", str(root / "pre")]) == 0
    windows = str(root / "pre" / "windows.wssl")
    for method in ("simclr", "byol"):
        assert main(["pretrain", *c, "--method", method, "--windows", windows,
                     "--out", str(root / method)]) == 0

    run_dirs = []
    for method in ("simclr", "byol", "supervised", "random"):
        for seed in range(10):
            out = root / f"probe-{method}-{seed}"
            argv = ["probe", *c, "--method", method, "--windows", windows,
                    "--seed", str(seed), "--out", str(out)]
            if method in ("simclr", "byol"):
                argv += ["--checkpoint", str(root / method / "checkpoint.wssl")]
            assert main(argv) == 0, (method, seed)
            run_dirs.append(str(out))

    report = root / "report"
    assert main(["report", *c, "--expect-runs", "10", "--out", str(report),
                 *run_dirs]) == 0
    return root, windows, report


@pytest.mark.slow
def test_criterion_6_report_protocol(report_run):
    import json

    root, windows, report = report_run
    from wearssl.data import load_windows

    payload = json.loads((report / "report.json").read_text())
    assert sorted(payload["methods"]) == ["byol", "random", "simclr", "supervised"]
    assert len(payload["tasks"]) == 5
    assert payload["runs_per_cell"] == 10
    for method in payload["methods"]:
        for task in payload["tasks"]:
            cell = payload["cells"][method][task]
            assert sorted(cell) == ["macro_f1", "micro_f1"]
            for metric in cell.values():
                assert metric["n"] == 10 and len(metric["values"]) == 10
                values = np.asarray(metric["values"])
                want = stats.t.ppf(0.975, 9) * values.std(ddof=1) / math.sqrt(10)
                assert metric["ci95"] == pytest.approx(want, abs=1e-12)
                assert metric["mean"] == pytest.approx(values.mean(), abs=1e-12)

    ws = load_windows(windows)
    split_members = {s: {w.participant_id for w in ws.by_split(s)}
                     for s in ("train", "val", "test")}
    for a in split_members:
        for b in split_members:
            if a < b:
                overlap = split_members[a] & split_members[b]
                assert not overlap, f"{a}/{b} share participants {overlap}"
    _report_line("criterion 6 report",
                 "4 methods x 5 tasks x 2 metrics, t-CI over 10 runs, "
                 "splits disjoint")


# -- criterion 7: F1 worked examples ----------------------------------------------

def test_criterion_7_metric_worked_examples():
    from wearssl.evaluation import f1_scores

    perfect = f1_scores(np.array([0, 1, 2, 0]), np.array([0, 1, 2, 0]), 3)
    assert perfect["macro_f1"] == 1.0 and perfect["micro_f1"] == 1.0

    # TP=40 FP=10 FN=10 TN=40 -> both classes F1 = 0.8
    y_true = np.array([1] * 50 + [0] * 50)
    y_pred = np.array([1] * 40 + [0] * 10 + [1] * 10 + [0] * 40)
    even = f1_scores(y_true, y_pred, 2)
    assert even["macro_f1"] == pytest.approx(0.8, abs=1e-12)
    assert even["micro_f1"] == pytest.approx(0.8, abs=1e-12)

    # all-majority on a 90/10 split: micro 0.9, macro = (2*.9/1.9)/2
    y_true = np.array([0] * 90 + [1] * 10)
    y_pred = np.zeros(100, dtype=int)
    skew = f1_scores(y_true, y_pred, 2)
    assert skew["micro_f1"] == pytest.approx(0.9, abs=1e-12)
    assert skew["macro_f1"] == pytest.approx((2 * 0.9 / 1.9) / 2, abs=1e-12)
    assert round(skew["macro_f1"], 3) == 0.474

    rng = np.random.default_rng(3)
    for _ in range(1000):
        n_classes = int(rng.integers(2, 6))
        n = int(rng.integers(5, 60))
        y_true = rng.integers(0, n_classes, size=n)
        y_pred = rng.integers(0, n_classes, size=n)
        got = f1_scores(y_true, y_pred, n_classes)
        macro_ref, micro_ref = f1_reference(y_pred, y_true, n_classes)
        accuracy = float((y_true == y_pred).mean())
        assert got["micro_f1"] == pytest.approx(accuracy, abs=1e-12)
        assert got["macro_f1"] == pytest.approx(macro_ref, abs=1e-12)
    _report_line("criterion 7 metrics",
                 "worked examples exact, micro == accuracy on 1000 matrices")


# -- criterion 8: bitwise determinism ----------------------------------------------

DETERMINISM_CONFIG = """\
[run]
seed = 0
tasks = diabetes, sleep_apnea

[data]
n_participants = 14
days = 0.25
start_hour = 20.5
prevalence_diabetes = 0.4, 0.3, 0.3
prevalence_sleep_apnea = 0.5, 0.5

[simclr]
epochs = 2
batch_size = 8

[byol]
epochs = 2
batch_size = 8

[supervised]
epochs = 2
"""


def _run_chain(root) -> dict[str, bytes]:
    root.mkdir(exist_ok=True)
    cfg = root / "run.ini"
    cfg.write_text(DETERMINISM_CONFIG)
    cwd = os.getcwd()
    os.chdir(root)
    try:
        c = ["--config", "run.ini"]
        assert main(["generate", *c, "--out", "gen"]) == 0
        assert main(["preprocess", *c, "--data", "gen/actigraphy.csv",
                     "--labels", "gen/labels.csv", "--out", "pre"]) == 0
        for method in ("simclr", "byol"):
            assert main(["pretrain", *c, "--method", method,
                         "--windows", "pre/windows.wssl", "--out", method]) == 0
        run_dirs = []
        for method in ("simclr", "byol", "supervised", "random"):
            argv = ["probe", *c, "--method", method, "--windows",
                    "pre/windows.wssl", "--seed", "0", "--out", f"probe-{method}"]
            if method in ("simclr", "byol"):
                argv += ["--checkpoint", f"{method}/checkpoint.wssl"]
            assert main(argv) == 0
            run_dirs.append(f"probe-{method}")
        assert main(["report", *c, "--expect-runs", "1", "--out", "report",
                     *run_dirs]) == 0
    finally:
        os.chdir(cwd)
    artifacts = ["simclr/checkpoint.wssl", "byol/checkpoint.wssl",
                 "report/report.json", "report/report.txt"]
    artifacts += [f"probe-{m}/metrics.json"
                  for m in ("simclr", "byol", "supervised", "random")]
    return {name: (root / name).read_bytes() for name in artifacts}


@pytest.mark.slow
def test_criterion_8_bitwise_determinism(tmp_path):
    first = _run_chain(tmp_path / "a")
    second = _run_chain(tmp_path / "b")
    differing = [k for k in first if first[k] != second[k]]
    assert not differing, f"artifacts differ: {differing}"
    _report_line("criterion 8 determinism",
                 f"{len(first)} artifacts bitwise identical across reruns")
