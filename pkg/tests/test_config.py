"""INI config loading, validation, and resolved-config round trips."""

import pytest

from wearssl.config import ConfigError, RunConfig, dump_config, load_config


def _load(tmp_path, text):
    p = tmp_path / "c.ini"
    p.write_text(text)
    return load_config(str(p))


def test_none_path_gives_defaults():
    cfg = load_config(None)
    assert cfg == RunConfig()


def test_values_land_in_the_right_places(tmp_path):
    cfg = _load(tmp_path, """
[run]
seed = 3
tasks = insomnia, diabetes

[data]
days = 1.5
n_participants = 40
prevalence_sleep_apnea = 0.6, 0.4

[preprocess]
split_seed = 9
zscore = false

[simclr]
temperature = 0.25
base_lr = 0.4
pipeline = scale(mu=1.0, sigma=0.2), negate

[byol]
ema = 0.97
optimizer = lars
ae_warmstart = true
ae_epochs = 3

[probe]
select_lambda = true
lambdas = 0.1, 0.01

[supervised]
learning_rate = 0.002
""")
    assert cfg.seed == 3
    assert cfg.tasks == ("insomnia", "diabetes")
    assert cfg.data.days == 1.5
    assert cfg.data.n_participants == 40
    assert cfg.data.prevalences["sleep_apnea"] == (0.6, 0.4)
    assert cfg.preprocess.split_seed == 9
    assert cfg.preprocess.zscore is False
    assert cfg.simclr.temperature == 0.25
    assert cfg.simclr.base_lr == 0.4
    assert [s.kind for s in cfg.simclr.pipeline.specs] == ["scale", "negate"]
    assert cfg.byol.beta == 0.97
    assert cfg.byol.optimizer == "lars"
    assert cfg.ae_warmstart is True
    assert cfg.autoencoder.epochs == 3
    assert cfg.probe.select_lambda is True
    assert cfg.probe.lambdas == (0.1, 0.01)
    assert cfg.supervised_lr == 0.002


def test_unset_keys_keep_defaults(tmp_path):
    cfg = _load(tmp_path, "[run]\nseed = 5\n")
    default = RunConfig()
    assert cfg.simclr == default.simclr
    assert cfg.byol == default.byol
    assert cfg.data == default.data


@pytest.mark.parametrize("text,fragment", [
    ("[warp]\nx = 1\n", "unknown section"),
    ("[simclr]\nwarp = 1\n", "unknown key"),
    ("[simclr]\nepochs = soon\n", "epochs"),
    ("[data]\ndays = -1\n", "days"),
    ("[byol]\noptimizer = sgd\n", "optimizer"),
    ("[simclr]\npipeline = drop_everything()\n", "drop_everything"),
    ("[probe]\nmax_iter = 0\n", "max_iter"),
    ("[run]\ntasks = diabetes, flu\n", "flu"),
    ("[byol]\nema = 1.5\n", "ema"),
])
def test_bad_configs_raise_config_error(tmp_path, text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        _load(tmp_path, text)


def test_resolved_dump_reloads_identically(tmp_path):
    cfg = _load(tmp_path, """
[run]
seed = 11

[simclr]
base_lr = 0.3
pipeline = segment_permute(n_segments=4), scale(mu=1.0, sigma=0.1)

[byol]
ema = 0.995
""")
    dumped = tmp_path / "resolved.ini"
    dumped.write_text(dump_config(cfg))
    again = load_config(str(dumped))
    assert dump_config(again) == dump_config(cfg)
    assert again.seed == cfg.seed
    assert again.byol.beta == cfg.byol.beta
    assert [s.kind for s in again.simclr.pipeline.specs] == \
        [s.kind for s in cfg.simclr.pipeline.specs]


def test_supervised_config_accessor(tmp_path):
    cfg = _load(tmp_path, "[supervised]\nepochs = 7\nbatch_size = 16\n")
    sup = cfg.supervised_config("insomnia")
    assert sup.task == "insomnia"
    assert sup.epochs == 7
    assert sup.batch_size == 16
    assert sup.seed == cfg.seed
    assert cfg.supervised_config("insomnia", seed=4).seed == 4


def test_pipeline_must_fit_window(tmp_path):
    with pytest.raises(ConfigError):
        _load(tmp_path, "[preprocess]\nwindow_length = 4\n"
                        "[simclr]\npipeline = segment_permute(n_segments=8)\n")
