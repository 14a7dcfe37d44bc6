"""
TKGE Configuration
Environment variables and settings
"""
import os
from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache
from typing import Literal

import torch


class Settings(BaseSettings):
    """Process settings loaded from environment variables (prefix TKGE_)."""

    model_config = SettingsConfigDict(
        env_prefix="TKGE_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Paths
    output_dir: str = "runs"

    # Runtime
    threads: int = 0  # 0 = all cores
    dtype: Literal["float64", "float32"] = "float64"
    eval_chunk_size: int = 65536

    # Logging
    log_level: str = "INFO"
    log_format: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"
    progress: bool = False

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32

    @property
    def worker_count(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
