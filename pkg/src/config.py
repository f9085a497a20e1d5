"""Configuration management for mwxe."""
import os
from pathlib import Path

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

_LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}


class Settings(BaseSettings):
    """Process-wide defaults from MWXE_* environment variables or .env."""

    model_config = SettingsConfigDict(
        env_prefix="MWXE_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Logging configuration
    log_level: str = "INFO"
    log_max_size: int = 10  # MB
    log_backup_count: int = 5
    log_file_path: str = ""

    # Series defaults
    eps_a: float = 1e-16
    eps_r: float = 1e-16
    eps_sparsity: float = 2.220446049250313e-16  # double epsilon
    m_max: int = 512

    # Build
    workers: int = 1

    # Quadrature oracle
    quad_rule_order: int = 10
    quad_max_depth: int = 6
    quad_abs_tol: float = 1e-15
    quad_rel_tol: float = 1e-13
    quad_max_cells: int = 4096

    # Validation
    validate_threshold: float = 1e-9

    # Reference sparsity tables
    reference_tables_file: str = str(Path(__file__).parent.parent / "config" / "reference-tables.yml")

    # Version configuration
    app_version: str = "unknown"

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        if v.upper() not in _LOG_LEVELS:
            raise ValueError(f"LOG_LEVEL must be one of {sorted(_LOG_LEVELS)}, got: {v}")
        return v.upper()

    @field_validator("eps_a", "eps_r", "eps_sparsity", "quad_abs_tol", "quad_rel_tol", "validate_threshold")
    @classmethod
    def validate_tolerance(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError(f"Tolerance must lie in (0, 1), got: {v}")
        return v

    @field_validator("quad_rule_order")
    @classmethod
    def validate_rule_order(cls, v):
        if v < 8:
            raise ValueError(f"Quadrature rule order must be at least 8, got: {v}")
        return v

    @field_validator("m_max", "workers", "quad_max_cells")
    @classmethod
    def validate_positive(cls, v):
        if v < 1:
            raise ValueError(f"Value must be a positive integer, got: {v}")
        return v

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self._load_version_info()

    def _load_version_info(self) -> None:
        """Load version information from environment or VERSION file."""
        self.app_version = os.getenv("APP_VERSION", self.app_version)
        if self.app_version == "unknown":
            try:
                version_file = Path(__file__).parent.parent / "VERSION"
                if version_file.exists():
                    self.app_version = version_file.read_text().strip()
            except OSError:
                pass


# Global settings instance
settings = Settings()
