import json

import numpy as np
import pytest

from config.run_config import RunConfig, config_from_dict, load_config, parse_taus
from config.settings import Settings
from tools.optimizer import OptimizerConfig
from utilities.cavity import JcParams, truncation_converged
from utilities.errors import ConfigError

MINIMAL = """
[system]
kappa = 1.0
gamma = 0.25

[model]
v = 2.0
"""

PHYSICAL = """
[system]
mode = "cavity3"
kappa = 0.05
gamma = 0.01
g = 0.065
omega = 0.02
s = 0.1
n_max = 6

[units]
physical = true
rate_unit = "2pi MHz"

[model]
v_list = [0.5, 1.0, 2.0]
mu = 1.0

[optimizer]
max_iter = 300
restarts = 1

[noise]
shots = 100000
eps = 0.5

[correlate]
taus = "0:0.5:5"
kind = "g1"
"""


def _write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_minimal_config_fills_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, MINIMAL))
    assert cfg.system.mode == "cavity3"
    assert cfg.system.n_max == 8
    assert cfg.system.gamma == 0.25
    assert cfg.v_list == (2.0,)
    assert cfg.optimizer == OptimizerConfig()
    assert cfg.noise is None
    assert cfg.output_format is None
    assert cfg.rescale_mu is True
    assert cfg.source.endswith("run.toml")


def test_zero_interaction_is_rejected():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"system": {"kappa": 1.0, "gamma": 0.1}, "model": {"v": 0.0}})
    assert any("LiebLinigerParams" in v and "v must be" in v for v in info.value.violations)


def test_every_violation_is_reported():
    data = {"system": {"kappa": 1.0, "gamma": 0.1, "n_max": 0}, "model": {"v": 0.0}, "output": {"format": "xml"}}
    with pytest.raises(ConfigError) as info:
        config_from_dict(data)
    assert len(info.value.violations) >= 3


def test_cavity_rates_are_required():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"system": {"kappa": 1.0}, "model": {"v": 1.0}})
    assert any("system.gamma" in v for v in info.value.violations)


def test_free_cmps_needs_bond_dimension():
    with pytest.raises(ConfigError):
        config_from_dict({"system": {"mode": "free_cmps"}, "model": {"v": 1.0}})
    cfg = config_from_dict({"system": {"mode": "free_cmps", "D": 3}, "model": {"v": 1.0}})
    assert cfg.system.space().D == 3


def test_unknown_keys_and_sections():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"system": {"kappa": 1.0, "gamma": 0.1, "detuning": 0.3}, "model": {"v": 1.0}, "plot": {}})
    joined = " ".join(info.value.violations)
    assert "system.detuning" in joined
    assert "[plot]" in joined


def test_wrong_types_are_reported():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"system": {"kappa": 1.0, "gamma": 0.1, "n_max": "eight"}, "model": {"v": 1.0}})
    assert any("system.n_max" in v for v in info.value.violations)


def test_bounds_must_match_parameter_count():
    with pytest.raises(ConfigError):
        config_from_dict({"system": {"kappa": 1.0, "gamma": 0.1}, "model": {"v": 1.0}, "optimizer": {"bounds": [[0, 1]]}})


def test_physical_units_are_converted(tmp_path):
    cfg = load_config(_write(tmp_path, PHYSICAL))
    assert cfg.system.kappa == 1.0
    assert cfg.system.g == pytest.approx(1.3, rel=1e-12)
    assert cfg.system.gamma == pytest.approx(0.2, rel=1e-12)
    assert cfg.system.s == pytest.approx(2.0, rel=1e-12)
    assert cfg.unit_factor == 0.05
    assert cfg.rate_unit == "2pi MHz"
    assert cfg.to_physical(cfg.system.g) == pytest.approx(0.065, rel=1e-12)


def test_resolved_config_round_trips(tmp_path):
    cfg = load_config(_write(tmp_path, PHYSICAL))
    dumped = tmp_path / "resolved.json"
    dumped.write_text(json.dumps(cfg.resolved()), encoding="utf-8")
    reloaded = load_config(dumped)
    assert reloaded.resolved() == cfg.resolved()
    assert reloaded.system == cfg.system
    assert reloaded.noise == cfg.noise
    assert reloaded.optimizer == cfg.optimizer


def test_default_config_resolves():
    data = RunConfig().resolved()
    assert data["units"]["physical"] is False
    assert "min_step" not in data["optimizer"]


def test_step_growth_and_mu_recipe_are_configurable():
    data = {
        "system": {"kappa": 1.0, "gamma": 0.1},
        "model": {"v": 1.0, "mu": 4.0, "rescale_mu": False},
        "optimizer": {"grow": 1.5},
        "output": {"format": "csv"},
    }
    cfg = config_from_dict(data)
    assert cfg.optimizer.grow == 1.5
    assert cfg.rescale_mu is False
    resolved = cfg.resolved()
    assert resolved["optimizer"]["grow"] == 1.5
    assert resolved["model"]["rescale_mu"] is False
    assert config_from_dict(resolved) == cfg
    with pytest.raises(ConfigError) as info:
        config_from_dict({**data, "optimizer": {"grow": 0.5}})
    assert any("grow" in v for v in info.value.violations)


def test_auto_truncate_raises_n_max():
    system = {"kappa": 1.0, "gamma": 0.1, "g": 1.0, "omega": 0.1, "n_max": 1, "auto_truncate": True}
    cfg = config_from_dict({"system": system, "model": {"v": 1.0}})
    expected = truncation_converged(JcParams(g=1.0, omega=0.1, kappa=1.0, gamma=0.1))
    assert cfg.system.n_max == max(1, expected)


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "[system\nkappa = 1", name="broken.toml"))


def test_parse_taus():
    assert np.allclose(parse_taus("0:0.5:2"), [0.0, 0.5, 1.0, 1.5, 2.0])
    assert np.allclose(parse_taus("0:0.1:1"), np.linspace(0.0, 1.0, 11))
    for bad in ("0:1", "a:b:c", "1:0:2", "2:1:1", "-1:1:2"):
        with pytest.raises(ValueError):
            parse_taus(bad)


def test_settings_reject_malformed_environment(monkeypatch):
    monkeypatch.setenv("CAVITYFIELD_JOBS", "many")
    with pytest.raises(ValueError):
        Settings.from_env()
    monkeypatch.setenv("CAVITYFIELD_JOBS", "2")
    monkeypatch.setenv("CAVITYFIELD_TRACE", "jaeger")
    with pytest.raises(ValueError):
        Settings.from_env()
    monkeypatch.setenv("CAVITYFIELD_TRACE", "console")
    settings = Settings.from_env()
    assert settings.jobs == 2 and settings.trace == "console"
