"""
File Utilities

Write-then-rename helpers. Nothing a command produces becomes visible
under its final name until the whole write succeeded.
"""

import hashlib
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from utils.logger_utils import get_logger


logger = get_logger(__name__)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


@contextmanager
def staged_output(out_dir: Path) -> Iterator[Path]:
    """
    Yield a staging directory next to out_dir. On success every staged
    file is renamed into out_dir; on failure the staging directory is
    removed and out_dir is left as it was.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    try:
        yield staging
    except BaseException:
        logger.warning("Discarding staged outputs | out_dir=%s", out_dir)
        shutil.rmtree(staging, ignore_errors=True)
        raise

    try:
        for staged in sorted(staging.iterdir()):
            os.replace(staged, out_dir / staged.name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
