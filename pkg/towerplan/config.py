"""
TowerPlan Configuration
Runtime settings loaded from the environment (prefix TOWERPLAN_) and .env
"""

from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Field cache (TOWERPLAN_CACHE_DIR overrides the location for the CLI)
    cache_dir: str = ".towerplan_cache"

    # Thread pool size for field computation, gain evaluation and brute force
    workers: int = 1

    # Logging
    log_level: str = "INFO"

    # Oracle limits
    brute_force_cap: int = 200_000  # max number of k-subsets enumerated
    kappa_samples: int = 100_000    # quadrature samples for the integral form of S

    # Gains at or below this value count as saturated (terminates with EXHAUSTED)
    gain_tolerance: float = 1e-15

    # Seed used when neither the scenario nor the CLI provides one
    default_seed: int = 0

    model_config = SettingsConfigDict(
        env_prefix="TOWERPLAN_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


settings = get_settings()
