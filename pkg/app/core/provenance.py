"""
Provenance helpers: stable config hashing and atomic report writes.
"""

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Mapping, Union

from app.utils.logging import get_logger

logger = get_logger(__name__)


def generate_config_hash(payload: Mapping[str, Any]) -> str:
    """
    SHA-256 of a study config in canonical JSON form.

    Keys are sorted at every level and separators are compact, so two configs
    that validate to the same values hash the same whatever their TOML layout.
    Reports carry this digest next to the master seed.

    Args:
        payload: JSON-mode dump of a validated config (or of suite parameters)

    Returns:
        Hex digest
    """
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def atomic_write_text(path: Union[str, Path], content: str) -> Path:
    """
    Write text to ``path`` through a temp file and an atomic rename.

    A reader never observes a partially written report, even if the
    process is interrupted mid-write.

    Args:
        path: Destination file
        content: Text content

    Returns:
        The destination path
    """
    destination = Path(path)
    destination.parent.mkdir(parents=True, exist_ok=True)

    fd, temp_name = tempfile.mkstemp(
        prefix=f".{destination.name}.", suffix=".tmp", dir=destination.parent
    )
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(content)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(temp_name, destination)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise

    logger.debug("Wrote report file", extra={"file": str(destination)})
    return destination
