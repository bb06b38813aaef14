import logging
import warnings
from os import path as os_path
from typing import Optional

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict


load_dotenv(dotenv_path=os_path.join(os_path.dirname(__file__), "..", "..", "..", ".env"))

_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="IQCLAB_")

    # Fallback seed for every seeded operation when neither --seed nor the
    # config file provides one.
    SEED: Optional[int] = None
    JOBS: int = 1
    LOG_LEVEL: str = "WARNING"

    # Numerical tolerances
    DET_TOL: float = 1e-9
    TIE_TOL: float = 1e-9
    CG_RTOL: float = 1e-12
    DET_RESIDUAL_BUDGET: float = 1e-6
    DEFAULT_RESTARTS: int = 4

    @property
    def log_level_value(self) -> int:
        """LOG_LEVEL as a `logging` constant."""
        return logging.getLevelName(self.LOG_LEVEL.upper())

    def resolve_seed(self, *candidates: Optional[int]) -> int:
        """First non-None of `candidates`, then SEED, then 0."""
        for candidate in candidates:
            if candidate is not None:
                return int(candidate)
        return self.SEED if self.SEED is not None else 0


def _check(settings_: Settings) -> Settings:
    if settings_.JOBS < 1:
        warnings.warn(
            f"IQCLAB_JOBS={settings_.JOBS} is not a positive worker count; "
            "falling back to a single worker.",
            stacklevel=2,
        )
        settings_.JOBS = 1
    if settings_.LOG_LEVEL.upper() not in _LOG_LEVELS:
        warnings.warn(
            f"IQCLAB_LOG_LEVEL={settings_.LOG_LEVEL!r} is not a logging level; "
            "using WARNING.",
            stacklevel=2,
        )
        settings_.LOG_LEVEL = "WARNING"
    return settings_


settings = _check(Settings())
