import pytest

from handcontact.config import ConfigError, ExperimentConfig, load_config, parse_config, required_paths


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg.to_dict() == ExperimentConfig().to_dict()


def test_values_are_typed():
    cfg = parse_config("""
[experiment]
mode = joint
seed = 4
[model]
head_sizes = 16, 8
[train]
lr = 0.01
[gplc]
agreement = no
m = 7
""")
    assert cfg.mode == "joint" and cfg.seed == 4
    assert cfg.model.head_sizes == (16, 8)
    assert cfg.train.lr == 0.01
    assert cfg.gplc.agreement is False and cfg.gplc.m == 7


def test_all_problems_reported_together():
    with pytest.raises(ConfigError) as info:
        parse_config("""
[experiment]
mode = magic
[train]
n_iter = many
bogus = 1
[gplc]
delta0 = 0.4
[extra]
""")
    text = " ".join(info.value.problems)
    for fragment in ("mode must be", "n_iter", "bogus", "delta", "unknown section"):
        assert fragment in text


def test_ini_roundtrip():
    cfg = parse_config("[gplc]\nrounds = 3\n[model]\nhidden_size = 12\n")
    assert parse_config(cfg.to_ini()).to_dict() == cfg.to_dict()


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.ini")


def test_required_paths():
    assert required_paths("supervised") == ("trusted",)
    assert required_paths("noisy_only") == ("noisy",)
    assert required_paths("gplc") == ("noisy", "trusted")
