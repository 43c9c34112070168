"""
Settings and configuration for Trial Emulation v1.0
Uses pydantic-settings for environment variable management

Only ambient behaviour lives here (logging, worker defaults, test gating).
Anything that can change a number in a report comes from the estimand
config file or from command-line flags.
"""

from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict

from trial_emulation import __version__


class Settings(BaseSettings):
    """
    Application settings loaded from environment variables
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="TRIAL_EMULATION_",
        case_sensitive=True,
        extra="ignore",
    )

    # Application
    APP_NAME: str = "Trial Emulation v1.0"
    APP_VERSION: str = __version__

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "text"  # "json" or "text"

    # Performance
    MAX_WORKERS: int = 1  # default for --threads; results do not depend on it

    # Testing
    RUN_SLOW_TESTS: bool = False


@lru_cache()
def get_settings() -> Settings:
    """
    Get cached settings instance
    Only loads once per process
    """
    return Settings()
