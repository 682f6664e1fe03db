from typing import Optional, Dict, Any
from pathlib import Path
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application Settings
    app_name: str = Field(default="Mean Teacher Desk", validation_alias="APP_NAME")
    app_version: str = Field(default="1.0.0", validation_alias="APP_VERSION")
    environment: str = Field(default="development", validation_alias="ENVIRONMENT")

    # Logging
    log_level: str = Field(default="INFO", validation_alias="LOG_LEVEL")
    log_format: str = Field(default="console", validation_alias="LOG_FORMAT")

    # Storage Configuration
    run_root: str = Field(default="runs", validation_alias="MT_RUN_ROOT")

    # Sweep execution
    sweep_workers: int = Field(default=2, validation_alias="SWEEP_WORKERS")

    # Numerics
    default_float_width: int = Field(default=32, validation_alias="MT_FLOAT_WIDTH")

    @property
    def run_root_path(self) -> Path:
        """Run-root directory as a Path"""
        return Path(self.run_root)

    def get_logging_config(self) -> Dict[str, Any]:
        """Get structlog configuration values"""
        return {
            "level": self.log_level.upper(),
            "json": self.log_format.lower() == "json",
        }

    def describe(self) -> Dict[str, Optional[str]]:
        """Settings summary for the status command"""
        return {
            "app_name": self.app_name,
            "app_version": self.app_version,
            "environment": self.environment,
            "run_root": str(self.run_root_path.resolve()),
            "sweep_workers": str(self.sweep_workers),
            "default_float_width": str(self.default_float_width),
            "log_level": self.log_level,
            "log_format": self.log_format,
        }


# Create a singleton instance
settings = Settings()
