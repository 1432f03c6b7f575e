from __future__ import annotations

from pathlib import Path

import pytest


def test_imports_and_config_parse():
    from eadrc.config import PRESETS, load_run_config

    repo_root = Path(__file__).resolve().parents[1]
    config_path = repo_root / "config" / "example.yaml"
    cfg = load_run_config(config_path=config_path)
    assert cfg.section("tune")["n"] == 2
    assert cfg.section("bode")["betas"] == [0.7, 0.3]
    assert cfg.sources == (f"file:{config_path}",)
    assert {"paper-n1", "paper-n2", "scenario-1", "scenario-2"} <= set(PRESETS)


@pytest.mark.parametrize("preset", ["paper-n1", "paper-n2", "scenario-1", "scenario-2", "open-loop"])
def test_presets_validate(preset: str):
    from eadrc.config import PRESETS, validate_sections

    assert validate_sections(PRESETS[preset], f"preset:{preset}")


def test_precedence_preset_file_flags(tmp_path: Path):
    from eadrc.config import load_run_config

    path = tmp_path / "run.yaml"
    path.write_text("tune:\n  omega_cl_rad_s: 5\n  k_eso: 9\n", encoding="utf-8")
    cfg = load_run_config(preset="paper-n2", config_path=path, overrides={"tune": {"k_eso": 11.0, "b0": None}})
    tune = cfg.section("tune")
    assert tune == {"n": 2, "omega_cl_rad_s": 5.0, "k_eso": 11.0, "b0": 1.0}
    assert cfg.sources == ("preset:paper-n2", f"file:{path}", "flags")


@pytest.mark.parametrize(
    "body",
    [
        "tune:\n  bogus: 1\n",
        "nosuch:\n  n: 2\n",
        "tune:\n  n: two\n",
        "tune:\n  n: 2.5\n",
        "bode:\n  betas: 0.7\n",
        "- a\n- b\n",
        "tune: [unclosed\n",
    ],
)
def test_bad_config_rejected(tmp_path: Path, body: str):
    from eadrc.config import load_run_config
    from eadrc.errors import ConfigError

    path = tmp_path / "bad.yaml"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(config_path=path)


def test_missing_config_and_preset():
    from eadrc.config import load_run_config, require
    from eadrc.errors import ConfigError

    with pytest.raises(ConfigError):
        load_run_config(preset="nope")
    with pytest.raises(ConfigError):
        load_run_config(config_path=Path("/nonexistent/run.yaml"))
    with pytest.raises(ConfigError):
        require({}, "n", "tune")


def test_load_yaml_requires_mapping(tmp_path: Path):
    from eadrc.errors import ConfigError
    from eadrc.utils import load_yaml

    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="must be a mapping"):
        load_yaml(path)
    empty = tmp_path / "empty.yaml"
    empty.write_text("", encoding="utf-8")
    assert load_yaml(empty) == {}
