import json

import pytest

from repocentrality.config import ConfigError, Settings, load_settings, read_config_file


def test_defaults():
    s = load_settings(environ={})
    assert (s.seed, s.tol, s.max_iter, s.window, s.horizons, s.test_fraction) == (0, 1e-8, 100, 1, 10, 0.2)
    assert s.threads >= 1


def test_precedence(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('seed = 3\nwindow = 4\nhorizons = 6\n[synth]\nn_repos = 50\n')
    env = {"REPOCENT_WINDOW": "5", "REPOCENT_HORIZONS": "7"}
    s = load_settings(cfg, {"horizons": 8, "seed": None}, env)
    assert (s.seed, s.window, s.horizons) == (3, 5, 8)
    assert s.synth == {"n_repos": 50}


def test_config_path_from_environment(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 9, "aft": {"l2": 0.01}}))
    s = load_settings(environ={"REPOCENT_CONFIG": str(cfg)})
    assert s.seed == 9 and s.aft == {"l2": 0.01}


def test_keywords_from_env():
    s = load_settings(environ={"REPOCENT_KEYWORDS": "dead, gone"})
    assert s.keywords == ("dead", "gone")


@pytest.mark.parametrize("text", ['nonsense = 1\n', 'seed = "abc"\n', 'window = 0\n',
                                  'test_fraction = 1.5\n', 'synth = 3\n', 'seed = [1\n'])
def test_bad_config_files(tmp_path, text):
    cfg = tmp_path / "c.toml"
    cfg.write_text(text)
    with pytest.raises(ConfigError):
        load_settings(cfg, environ={})


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        read_config_file("/nonexistent/c.toml")


def test_validate_rejects_threads():
    with pytest.raises(ConfigError):
        Settings(threads=0).validate()
