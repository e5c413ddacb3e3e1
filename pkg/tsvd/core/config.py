"""
Configuration settings for the Ternary SVD toolkit
"""
import os
from functools import lru_cache

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Toolkit settings.

    Loads configuration from environment variables (and an optional `.env`
    file) and defines defaults for the numerical kernels, the studies and the
    command-line front end. Every operation still accepts its knobs as
    explicit arguments; these values are only the defaults.

    Attributes:
        APP_NAME (str): The name of the application.
        APP_VERSION (str): The current version of the application.
        LOG_LEVEL (str): Root log level used by the CLI.
        TSVD_THREADS (int): Upper bound on worker threads for form selection and studies.
        DEFAULT_THETA (float): Default ternarization angle threshold in radians.
        DEFAULT_BIT_WIDTH (int): Default bit-width d for cost translation.
        DEFAULT_SPARSITY (float): Sparsity rate plugged into the critical rank for the automatic rank cap.
        PINV_RCOND (float): Relative eigenvalue cutoff of the Gram pseudo-inverse.
        POWER_ITERATIONS (int): Iteration cap of the spectral-norm power method.
        POWER_TOL (float): Relative eigenvalue change that stops the power method.
    """

    # App configuration
    APP_NAME: str = "Ternary SVD Toolkit"
    APP_VERSION: str = "1.0.0"
    LOG_LEVEL: str = "INFO"

    # Parallelism
    TSVD_THREADS: int = Field(default_factory=lambda: os.cpu_count() or 1)

    # Numerical defaults
    DEFAULT_THETA: float = 0.576
    DEFAULT_BIT_WIDTH: int = 32
    DEFAULT_SPARSITY: float = 0.29
    PINV_RCOND: float = 1e-10
    POWER_ITERATIONS: int = 200
    POWER_TOL: float = 1e-8

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")

    @field_validator("TSVD_THREADS")
    @classmethod
    def validate_threads(cls, v: int) -> int:
        """Clamps the thread cap to at least one worker."""
        return max(1, int(v))


@lru_cache
def get_settings() -> Settings:
    """Get toolkit settings"""
    return Settings()


# Global settings instance
settings = get_settings()
