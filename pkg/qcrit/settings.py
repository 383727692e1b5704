"""Run-time settings read from the environment (and an optional .env file)."""
import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from .errors import ModelError


class Settings(BaseModel):
    jobs: int = Field(1, ge=1, description="Worker threads for parameter sweeps.")
    log_level: str = Field("INFO", description="Root logging level.")
    timestamp: Optional[str] = Field(None, description="Fixed manifest timestamp for reproducible output.")
    source_date_epoch: Optional[int] = Field(None, description="Fallback reproducible timestamp (seconds).")


def load_settings() -> Settings:
    load_dotenv()
    values = {
        "jobs": os.getenv("QCRIT_JOBS", "1"),
        "log_level": os.getenv("QCRIT_LOG_LEVEL", "INFO"),
        "timestamp": os.getenv("QCRIT_TIMESTAMP") or None,
        "source_date_epoch": os.getenv("SOURCE_DATE_EPOCH") or None,
    }
    try:
        return Settings(**values)
    except ValidationError as e:
        raise ModelError(f"Invalid environment settings: {e}") from e
