"""
Volume Container Repository - File Operations

A container is a pair of files sharing a stem:
- <name>.json  header {dims, spacing_mm, dtype, channels, kind}
- <name>.bin   little-endian payload, channel-major then x-fastest

Writes go through the atomic helpers; the payload is written before the
header so a visible header always has a complete payload next to it.
"""

import json
from pathlib import Path
from typing import Tuple

import numpy as np
from pydantic import ValidationError

from constants.exit_codes import ExitCode
from core.exceptions import DirForgeError
from schemas.container_schema import DTYPE_BYTES, NUMPY_DTYPES, ContainerHeader
from utils.file_utils import atomic_write_bytes, atomic_write_text, sha256_file


def container_paths(path) -> Tuple[Path, Path]:
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".json", ".bin") else path
    return stem.with_name(stem.name + ".json"), stem.with_name(stem.name + ".bin")


def read_header(path) -> ContainerHeader:
    header_path, _ = container_paths(path)
    if not header_path.is_file():
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"missing file: {header_path}")
    try:
        raw = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"invalid header {header_path}: {exc}")
    if not isinstance(raw, dict):
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"invalid header {header_path}")
    if raw.get("dtype", "f32") not in DTYPE_BYTES:
        raise DirForgeError(
            exit_code=ExitCode.DATA_ERROR,
            detail=f"unsupported dtype {raw.get('dtype')!r} in {header_path}",
        )
    try:
        return ContainerHeader.model_validate(raw)
    except ValidationError as exc:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"invalid header {header_path}: {exc}")


def read_container(path) -> Tuple[ContainerHeader, np.ndarray]:
    """Returns the header and the payload as (channels, nx, ny, nz)."""
    header = read_header(path)
    _, payload_path = container_paths(path)
    if not payload_path.is_file():
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"missing file: {payload_path}")

    payload = payload_path.read_bytes()
    if len(payload) != header.payload_bytes:
        raise DirForgeError(
            exit_code=ExitCode.DATA_ERROR,
            detail=f"payload size mismatch: {payload_path} has {len(payload)} bytes, "
                   f"header implies {header.payload_bytes}",
        )

    nx, ny, nz = header.dims
    flat = np.frombuffer(payload, dtype=NUMPY_DTYPES[header.dtype])
    array = flat.reshape(header.channels, nz, ny, nx).transpose(0, 3, 2, 1)
    return header, array


def write_container(path, array: np.ndarray, header: ContainerHeader) -> str:
    """Writes payload then header; returns the payload sha256."""
    array = np.asarray(array)
    if array.ndim == 3:
        array = array[None]
    expected = (header.channels,) + tuple(header.dims)
    if array.shape != expected:
        raise DirForgeError(
            exit_code=ExitCode.INTERNAL_ERROR,
            detail=f"container array shape {array.shape} != header {expected}",
        )

    header_path, payload_path = container_paths(path)
    payload = np.ascontiguousarray(
        array.transpose(0, 3, 2, 1), dtype=NUMPY_DTYPES[header.dtype]
    ).tobytes()
    atomic_write_bytes(payload_path, payload)
    atomic_write_text(header_path, header.model_dump_json(indent=2))
    return sha256_file(payload_path)


def payload_checksum(path) -> str:
    _, payload_path = container_paths(path)
    if not payload_path.is_file():
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"missing file: {payload_path}")
    return sha256_file(payload_path)
