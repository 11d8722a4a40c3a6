import json
from pathlib import Path

import pytest

from langchain_extremal.config import (
    Command,
    default_tol,
    load_config,
    log_level,
)
from langchain_extremal.documents import ReportFormat
from langchain_extremal.errors import ExtremalError


def test_defaults(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("EXTREMAL_DEFAULT_TOL", raising=False)
    config = load_config(command="classify")
    assert config.command == Command.CLASSIFY
    assert config.tol == 1e-9
    assert config.seed is None
    assert config.q == 0.25
    assert config.format == ReportFormat.JSON


def test_environment_overrides(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("EXTREMAL_DEFAULT_TOL", "1e-6")
    monkeypatch.setenv("EXTREMAL_LOG_LEVEL", "debug")
    assert default_tol() == 1e-6
    assert log_level() == "DEBUG"
    assert load_config(command="classify").tol == 1e-6


def test_file_values_are_overridden_by_flags(tmp_path: Path) -> None:
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"command": "porosity", "seed": 1, "q": 0.1, "params": {"t": 2}}))
    config = load_config(str(path), seed=7, q=None)
    assert config.seed == 7
    assert config.q == 0.1
    assert config.params == {"t": 2}


@pytest.mark.parametrize("command", ["porosity", "lipschitz"])
def test_seed_is_mandatory_for_randomised_commands(command: str) -> None:
    with pytest.raises(ExtremalError, match="seed is mandatory"):
        load_config(command=command)
    assert load_config(command=command, seed=0).seed == 0


@pytest.mark.parametrize(
    "overrides",
    [
        {"command": "frobnicate"},
        {"command": "classify", "q": 0.5},
        {"command": "classify", "seed": -1},
        {"command": "classify", "unknown": 1},
        {"command": "classify", "lambda_step": 0.0},
    ],
)
def test_invalid_configuration(overrides: dict) -> None:
    with pytest.raises(ExtremalError, match="Invalid run configuration"):
        load_config(**overrides)


def test_invalid_config_file(tmp_path: Path) -> None:
    path = tmp_path / "run.json"
    path.write_text("[1, 2]")
    with pytest.raises(ExtremalError, match="expected a JSON object"):
        load_config(str(path))
    path.write_text("{")
    with pytest.raises(ExtremalError, match="Invalid config file"):
        load_config(str(path))


def test_config_hash_tracks_content() -> None:
    first = load_config(command="porosity", seed=7)
    assert first.config_hash() == load_config(command="porosity", seed=7).config_hash()
    assert first.config_hash() != load_config(command="porosity", seed=8).config_hash()
    assert len(first.config_hash()) == 64
