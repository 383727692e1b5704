"""Result files: CSV tables and JSON summaries, each carrying a run manifest."""
import csv
import json
import logging
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from . import __version__
from .settings import Settings

logger = logging.getLogger(__name__)


class RunManifest(BaseModel):
    command: str
    version: str = __version__
    timestamp: str
    model: Dict[str, Any] = Field(description="Full model description the run was made with.")
    options: Dict[str, Any] = Field(default_factory=dict, description="Numerical options of the run.")
    python: str = Field(default_factory=platform.python_version)


def manifest_timestamp(settings: Settings) -> str:
    if settings.timestamp:
        return settings.timestamp
    if settings.source_date_epoch is not None:
        moment = datetime.fromtimestamp(settings.source_date_epoch, tz=timezone.utc)
    else:
        moment = datetime.now(tz=timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def _plain(value: Any) -> Any:
    """JSON-ready view of numpy scalars, arrays, complex numbers and enums."""
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(value.real), "im": float(value.imag)}
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def write_json(path: Path, payload: Dict[str, Any], manifest: RunManifest) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"manifest": manifest.model_dump(mode="json"), **_plain(payload)}
    with open(path, "w", newline="\n") as f:
        f.write(json.dumps(document, indent=2, sort_keys=True))
        f.write("\n")
    logger.info(f"Wrote {path}")
    return path


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]],
              manifest: RunManifest, units: Optional[Sequence[str]] = None) -> Path:
    """One ``# manifest`` comment line, then a header ``name[unit]`` and the rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header: List[str] = [f"{c}[{u}]" if u else c for c, u in zip(columns, units or [""] * len(columns))]
    with open(path, "w", newline="") as f:
        f.write("# manifest: " + manifest.model_dump_json() + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    logger.info(f"Wrote {path}")
    return path
