"""File system utility functions."""

import logging
import os
import tempfile
from pathlib import Path

logger = logging.getLogger(__name__)


def ensure_dir(path: Path) -> Path:
    """Create directory if it doesn't exist.

    Args:
        path: Path to directory to create.

    Returns:
        The path to the created/existing directory.

    Raises:
        OSError: If directory cannot be created.
    """
    path = Path(path)
    if not path.exists():
        logger.debug(f"Creating directory: {path}")
        path.mkdir(parents=True, exist_ok=True)
    return path


def safe_write_bytes(path: Path, content: bytes) -> None:
    """Write bytes to a file through a temp file and an atomic rename.

    A crash mid-write leaves either the old file or no file, never a
    truncated one; checkpoints and disparity files rely on this.

    Args:
        path: Path to write the file to.
        content: Bytes to write.

    Raises:
        OSError: If file cannot be written.
    """
    path = Path(path)
    ensure_dir(path.parent)

    fd, temp_path = tempfile.mkstemp(
        dir=path.parent,
        prefix=f".{path.name}.",
        suffix=".tmp"
    )

    try:
        with os.fdopen(fd, "wb") as f:
            f.write(content)
        os.replace(temp_path, path)
        logger.debug(f"Wrote file: {path} ({len(content)} bytes)")
    except Exception:
        if os.path.exists(temp_path):
            os.unlink(temp_path)
        raise


def safe_write(path: Path, content: str) -> None:
    """Write text to a file safely using temp file and rename.

    Args:
        path: Path to write the file to.
        content: Text content to write (UTF-8).

    Raises:
        OSError: If file cannot be written.
    """
    safe_write_bytes(path, content.encode("utf-8"))
