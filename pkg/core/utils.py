from __future__ import annotations

import json
import logging
import os
import tempfile
from pathlib import Path

from lamb.json import JsonEncoder

__all__ = ["atomic_write_text", "dump_json", "header_lines"]

logger = logging.getLogger(__name__)


def atomic_write_text(path: str | Path, content: str) -> Path:
    """Writes content next to the destination and renames it into place"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(content)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug(f"written: {path}")
    return path


def dump_json(data, indent: int | None = 2) -> str:
    return json.dumps(data, indent=indent, ensure_ascii=False, cls=JsonEncoder, allow_nan=True) + "\n"


def header_lines(config: dict) -> str:
    """'#' comment block embedding the resolved run configuration"""
    body = json.dumps(config, ensure_ascii=False, cls=JsonEncoder, sort_keys=True)
    return f"# kramers run config\n# {body}\n"
