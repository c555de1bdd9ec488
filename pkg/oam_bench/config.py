from functools import lru_cache

from pydantic import field_validator
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    output_dir: str = "./results"
    log_level: str = "INFO"

    # Sweep thread pool; 1 keeps evaluation serial
    workers: int = 1

    oam_range: int = 4
    csv_digits: int = 12
    eps_floor: float = 1e-12
    mc_repeats: int = 100

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        v = v.upper()
        if v not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"Unknown log level: {v}")
        return v

    @field_validator("workers", "mc_repeats")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    @field_validator("oam_range")
    @classmethod
    def validate_oam_range(cls, v: int) -> int:
        if v < 0:
            raise ValueError("OAM truncation must be >= 0")
        return v

    @field_validator("eps_floor")
    @classmethod
    def validate_eps_floor(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("eps_floor must lie in (0, 1)")
        return v

    class Config:
        env_prefix = "OAM_BENCH_"
        env_file = ".env"
        extra = "ignore"


@lru_cache()
def get_settings() -> Settings:
    return Settings()
