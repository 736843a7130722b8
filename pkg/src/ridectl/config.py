"""ridectl configuration management.
ridectl 설정 관리.

Configuration priority (highest to lowest):
1. Constructor arguments / command-line flags
2. Environment variables (RIDECTL_*)
3. .env file in the working directory
4. User config (~/.config/ridectl/config)
5. System config (/etc/ridectl/config)
"""

import os
from pathlib import Path
from typing import Any, Optional, Tuple, Type

from pydantic import Field
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict


def _load_config_file(filepath: Path) -> dict[str, str]:
    """Load key=value config file / key=value 설정 파일 로드."""
    config: dict[str, str] = {}

    if not filepath.exists():
        return config

    try:
        for line in filepath.read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, value = line.split("=", 1)
            config[key.strip()] = value.strip().strip('"').strip("'")
    except (PermissionError, UnicodeDecodeError):
        pass

    return config


def _get_user_config_path() -> Path:
    """Get user config path / 사용자 설정 파일 경로."""
    config_home = os.environ.get("XDG_CONFIG_HOME", Path.home() / ".config")
    return Path(config_home) / "ridectl" / "config"


def _get_system_config_path() -> Path:
    """Get system config path / 시스템 설정 파일 경로."""
    return Path("/etc/ridectl/config")


def _load_all_configs() -> dict[str, str]:
    """Load all config files with priority (user config > system config).

    Keys may be written as settings fields (``delta=0.05``) or in their
    environment form (``RIDECTL_DELTA=0.05``).
    """
    result: dict[str, str] = {}
    for path in (_get_system_config_path(), _get_user_config_path()):
        for key, value in _load_config_file(path).items():
            name = key.lower().removeprefix("ridectl_")
            if name in Settings.model_fields:
                result[name] = value
    return result


class ConfigFileSource(PydanticBaseSettingsSource):
    """Custom settings source for config files."""

    def get_field_value(self, field: Any, field_name: str) -> Tuple[Any, str, bool]:
        config = _load_all_configs()
        if field_name in config:
            return config[field_name], field_name, False
        return None, field_name, False

    def __call__(self) -> dict[str, Any]:
        return _load_all_configs()


class Settings(BaseSettings):
    """Application settings / 애플리케이션 설정."""

    model_config = SettingsConfigDict(
        env_prefix="RIDECTL_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    output_dir: Path = Field(
        default=Path("."),
        description="Default directory for command outputs",
    )

    # Model and targets
    window_minutes: float = Field(default=20.0, gt=0, description="Window length w in minutes")
    delta: float = Field(default=0.01, gt=0, lt=1, description="Quality of service threshold")
    quadrature_step: float = Field(
        default=0.1,
        gt=0,
        description="Largest quadrature panel (minutes) for the time-averaged blocking bound",
    )
    min_window_trips: int = Field(
        default=5,
        ge=1,
        description="Windows with fewer trips use the region's whole-horizon durations",
    )
    pickup_minutes: float = Field(default=0.0, ge=0, description="Added to every ride duration")

    # Output and execution
    float_precision: int = Field(default=6, ge=0, le=12, description="Decimals in CSV output")
    jobs: int = Field(default=1, ge=1, description="Worker processes for replications")
    log_level: str = Field(default="WARNING", description="Log level when --verbose is not given")

    @property
    def float_format(self) -> str:
        return f"%.{self.float_precision}f"

    def output_path(self, path: Optional[Path], default_name: str) -> Path:
        """Resolve an ``--out`` value; without one, place ``default_name`` under ``output_dir``."""
        if path is None:
            return self.output_dir / default_name
        return path

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        """Customize settings sources.

        Priority (highest to lowest):
        1. init_settings (constructor args)
        2. env_settings (RIDECTL_* environment variables)
        3. dotenv_settings (.env file)
        4. config_files (~/.config/ridectl/config, /etc/ridectl/config)
        5. file_secret_settings (secrets directory)
        """
        return (
            init_settings,
            env_settings,
            dotenv_settings,
            ConfigFileSource(settings_cls),
            file_secret_settings,
        )


# Global settings instance
settings = Settings()
