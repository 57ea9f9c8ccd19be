from __future__ import annotations

import os
import tempfile
from pathlib import Path

WORKERS_ENV = "HOMF_WORKERS"


def resolve_workers(value: int | None = None) -> int:
    """Explicit value first, then $HOMF_WORKERS, then 1."""
    if value is None:
        env = os.environ.get(WORKERS_ENV, "").strip()
        value = int(env) if env else 1
    value = int(value)
    if value < 1:
        raise ValueError(f"worker count must be >= 1, got {value}")
    return value


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
