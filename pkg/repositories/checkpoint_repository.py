"""
Checkpoint Repository - File Operations

One checkpoint per (stage, role), stored as
- <stage>_<role>.json  CheckpointManifest (architecture, tensor table, checksum)
- <stage>_<role>.bin   float32 little-endian tensors, concatenated in name order
"""

import json
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import ValidationError

from constants.exit_codes import ExitCode
from constants.stages import Roles
from core.exceptions import DirForgeError
from models.network_model import DiscriminatorParams, GeneratorParams
from nn.tensor import Tensor
from schemas.architecture_schema import DiscriminatorArchitecture, GeneratorArchitecture
from schemas.manifest_schema import CheckpointManifest, TensorEntry
from utils.file_utils import atomic_write_bytes, atomic_write_text, sha256_bytes

Params = Union[GeneratorParams, DiscriminatorParams]


def checkpoint_path(ckpt_dir, stage: str, role: str) -> Path:
    return Path(ckpt_dir) / f"{stage}_{role}.json"


def role_of(params: Params) -> str:
    return Roles.GENERATOR if isinstance(params, GeneratorParams) else Roles.DISCRIMINATOR


def save_checkpoint(ckpt_dir, params: Params, seed: int) -> Path:
    role = role_of(params)
    manifest_path = checkpoint_path(ckpt_dir, params.stage, role)
    payload_path = manifest_path.with_suffix(".bin")

    entries, chunks, offset = [], [], 0
    for name, tensor in params.named():
        data = np.ascontiguousarray(tensor.data, dtype="<f4").tobytes()
        entries.append(TensorEntry(name=name, shape=tuple(tensor.shape), offset=offset, nbytes=len(data)))
        chunks.append(data)
        offset += len(data)
    payload = b"".join(chunks)

    manifest = CheckpointManifest(
        stage=params.stage,
        role=role,
        seed=seed,
        architecture=params.architecture.model_dump(mode="json"),
        payload=payload_path.name,
        sha256=sha256_bytes(payload),
        tensors=entries,
    )
    atomic_write_bytes(payload_path, payload)
    atomic_write_text(manifest_path, manifest.model_dump_json(indent=2))
    return manifest_path


def read_manifest(path) -> CheckpointManifest:
    path = Path(path)
    if not path.is_file():
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"missing checkpoint: {path}")
    try:
        return CheckpointManifest.model_validate(json.loads(path.read_text()))
    except (json.JSONDecodeError, ValidationError) as exc:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"invalid checkpoint manifest {path}: {exc}")


def load_checkpoint(path) -> Params:
    path = Path(path)
    manifest = read_manifest(path)
    payload_path = path.parent / manifest.payload
    if not payload_path.is_file():
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"missing checkpoint payload: {payload_path}")
    payload = payload_path.read_bytes()
    if sha256_bytes(payload) != manifest.sha256:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"checkpoint checksum mismatch: {payload_path}")

    tensors = {}
    for entry in manifest.tensors:
        if entry.offset + entry.nbytes > len(payload) or entry.nbytes != 4 * int(np.prod(entry.shape)):
            raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"checkpoint tensor {entry.name} is out of range")
        data = np.frombuffer(payload, dtype="<f4", count=entry.nbytes // 4, offset=entry.offset)
        tensors[entry.name] = Tensor(data.reshape(entry.shape).astype(np.float32), requires_grad=True, name=entry.name)

    try:
        if manifest.role == Roles.GENERATOR:
            architecture = GeneratorArchitecture.model_validate(manifest.architecture)
            return GeneratorParams(stage=manifest.stage, architecture=architecture, tensors=tensors)
        if manifest.role == Roles.DISCRIMINATOR:
            architecture = DiscriminatorArchitecture.model_validate(manifest.architecture)
            return DiscriminatorParams(stage=manifest.stage, architecture=architecture, tensors=tensors)
    except ValidationError as exc:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"checkpoint {path} does not match its architecture: {exc}")
    raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"unknown checkpoint role {manifest.role!r}")
