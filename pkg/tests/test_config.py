import pytest

from nrdetector.config import PROFILES, PipelineConfig, build_config, parse_config_text
from nrdetector.exceptions import ConfigError


def test_defaults():
    cfg = PipelineConfig()
    assert cfg.selector.k == 5 and cfg.selector.beta == 0.05 and cfg.selector.l_max == 4
    assert cfg.selector.m == 4 and cfg.selector.lambda0 == 0.32
    assert cfg.train.learning_rate == 1e-4 and cfg.train.batch_size == 32 and cfg.train.epochs == 100
    assert cfg.encoder.d == 64 and cfg.encoder.n_layers == 7 and cfg.encoder.kernel_width == 2
    assert cfg.data.window == 100 and cfg.noise.e1 == 0.6


@pytest.mark.parametrize(
    "name, prior, k",
    [("emg", 0.25, 0.65), ("smd", 0.8, 0.15), ("psm", 0.4, 0.6), ("msl", 0.5, 0.8), ("smap", 0.5, 0.9)],
)
def test_dataset_profiles(name, prior, k):
    cfg = build_config(profile=name)
    assert cfg.criterion.pi_p == prior and cfg.pointdet.k == k
    assert cfg.run.profile == name


def test_precedence(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nrun.profile = psm\ncriterion.pi_p = 0.33  # inline\ntrain.epochs = 7\n")
    cfg = build_config(path, overrides={"train.epochs": "9"})
    assert cfg.run.profile == "psm"
    assert cfg.criterion.pi_p == 0.33  # file beats profile
    assert cfg.train.epochs == 9  # override beats file
    assert cfg.pointdet.k == PROFILES["psm"]["pointdet.k"]


def test_overrides_are_validated_together():
    cfg = build_config(overrides={"data.source": "csv", "data.path": "x.csv"})
    assert cfg.data.source == "csv"
    with pytest.raises(ConfigError):
        build_config(overrides={"data.source": "csv"})


@pytest.mark.parametrize(
    "overrides",
    [{"nope.x": 1}, {"train.nope": 1}, {"train": 1}, {"train.epochs": "ten"}, {"criterion.pi_p": 1.5},
     {"pointdet.score_source": "x"}, {"train.epochs": True}],
)
def test_bad_overrides(overrides):
    with pytest.raises(ConfigError):
        build_config(overrides=overrides)


def test_parse_errors():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("train.epochs = 1\ntrain.epochs = 2\n")
    with pytest.raises(ConfigError, match=":1:"):
        parse_config_text("train.epochs\n")
    with pytest.raises(ConfigError):
        build_config("/nonexistent/config.cfg")


def test_text_roundtrip_and_fingerprint(tmp_path):
    cfg = build_config(profile="smd", overrides={"train.hidden": "32, 16", "selector.extraction": "false"})
    path = tmp_path / "dump.cfg"
    path.write_text(cfg.to_text())
    back = build_config(path)
    assert back == cfg
    assert back.fingerprint() == cfg.fingerprint()
    assert cfg.fingerprint() != build_config(profile="smd").fingerprint()
