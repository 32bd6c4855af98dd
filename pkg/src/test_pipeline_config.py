"""
Tests for configuration layering: defaults, config files, environment and overrides.
"""

import json
from pathlib import Path

import pytest

from pipeline_config import load_config
from pipeline_errors import ConfigError


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    monkeypatch.delenv("CAVITATION_OUT_DIR", raising=False)
    monkeypatch.delenv("CAVITATION_WORKERS", raising=False)


def test_defaults():
    config = load_config()

    assert config.window_size == 16384
    assert config.train_fraction == 0.8
    assert config.task == "binary"
    assert config.asfe.k == 5
    assert config.asfe_enabled
    assert config.out_dir == Path("output")
    assert config.gbt.seed == config.seed == 0


def test_json_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"window_size": 8192, "task": "four_class", "gbt": {"num_rounds": 30}}))

    config = load_config(path)

    assert config.window_size == 8192
    assert config.task == "four_class"
    assert config.gbt.num_rounds == 30


def test_toml_file(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text('seed = 4\ntask = "five_class"\n\n[asfe]\nk = 7\n\n[sweep]\nks = [5, 6]\n')

    config = load_config(path)

    assert config.seed == 4 and config.gbt.seed == 4
    assert config.asfe.k == 7
    assert config.sweep.ks == [5, 6]
    assert config.sweep.window_sizes == [8192, 16384, 32768]


def test_environment_overrides_file(tmp_path, monkeypatch):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"out_dir": "from_file", "workers": 2}))
    monkeypatch.setenv("CAVITATION_OUT_DIR", str(tmp_path / "from_env"))
    monkeypatch.setenv("CAVITATION_WORKERS", "3")

    config = load_config(path)

    assert config.out_dir == tmp_path / "from_env"
    assert config.workers == 3


def test_non_integer_workers_in_environment(monkeypatch):
    monkeypatch.setenv("CAVITATION_WORKERS", "many")
    with pytest.raises(ConfigError, match="CAVITATION_WORKERS"):
        load_config()


def test_overrides_win_and_none_is_ignored(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"window_size": 8192, "asfe": {"k": 6, "strict": True}}))

    config = load_config(path, {"window_size": None, "task": "five_class", "asfe": {"k": 8}})

    assert config.window_size == 8192
    assert config.task == "five_class"
    assert config.asfe.k == 8
    assert config.asfe.strict


def test_explicit_gbt_seed_is_kept():
    assert load_config(overrides={"seed": 3, "gbt": {"seed": 11}}).gbt.seed == 11


@pytest.mark.parametrize("overrides, message", [
    ({"window": 10}, "unknown config keys"),
    ({"window_size": 0}, "window_size"),
    ({"train_fraction": 1.0}, "train_fraction"),
    ({"task": "six_class"}, "unknown task"),
    ({"workers": 0}, "workers"),
    ({"asfe": {"k": 11}}, "asfe k"),
    ({"window_size": "wide"}, "invalid config value"),
])
def test_invalid_settings(overrides, message):
    with pytest.raises(ConfigError, match=message) as excinfo:
        load_config(overrides=overrides)
    assert excinfo.value.exit_code == 2


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.json")

    broken = tmp_path / "broken.json"
    broken.write_text('{"seed": ')
    with pytest.raises(ConfigError, match="malformed"):
        load_config(broken)

    listed = tmp_path / "listed.json"
    listed.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="top level"):
        load_config(listed)


def test_to_dict_is_json_ready():
    document = load_config(overrides={"manifest": "data/manifest.json"}).to_dict()
    assert json.loads(json.dumps(document)) == document
    assert document["manifest"] == "data/manifest.json"
