from pathlib import Path

import pytest
from pydantic import ValidationError

from ridectl.config import Settings


@pytest.fixture
def clean_env(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path / "xdg"))
    for name in ("RIDECTL_DELTA", "RIDECTL_WINDOW_MINUTES", "RIDECTL_OUTPUT_DIR", "RIDECTL_JOBS"):
        monkeypatch.delenv(name, raising=False)
    return tmp_path


def write_user_config(root: Path, text: str) -> None:
    path = root / "xdg" / "ridectl" / "config"
    path.parent.mkdir(parents=True)
    path.write_text(text)


def test_defaults(clean_env):
    settings = Settings()
    assert settings.delta == 0.01
    assert settings.window_minutes == 20.0
    assert settings.jobs == 1


def test_environment(clean_env, monkeypatch):
    monkeypatch.setenv("RIDECTL_DELTA", "0.05")
    monkeypatch.setenv("RIDECTL_OUTPUT_DIR", str(clean_env / "out"))
    settings = Settings()
    assert settings.delta == 0.05
    assert settings.output_path(None, "targets.csv") == clean_env / "out" / "targets.csv"
    assert settings.output_path(Path("x.csv"), "targets.csv") == Path("x.csv")


def test_user_config_file(clean_env):
    write_user_config(clean_env, '# comment\nRIDECTL_WINDOW_MINUTES=15\ndelta="0.02"\nunknown=1\n')
    settings = Settings()
    assert settings.window_minutes == 15.0
    assert settings.delta == 0.02


def test_environment_beats_config_file(clean_env, monkeypatch):
    write_user_config(clean_env, "delta=0.02\n")
    monkeypatch.setenv("RIDECTL_DELTA", "0.03")
    assert Settings().delta == 0.03


def test_dotenv(clean_env):
    (clean_env / ".env").write_text("RIDECTL_JOBS=3\n")
    assert Settings().jobs == 3


def test_invalid_value(clean_env, monkeypatch):
    monkeypatch.setenv("RIDECTL_DELTA", "1.5")
    with pytest.raises(ValidationError):
        Settings()


def test_float_format(clean_env):
    assert Settings(float_precision=3).float_format == "%.3f"
