from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from schemas.phantom_schema import PhantomSpec


# =========================
# Phantom manifest
# =========================

class ManifestEntry(BaseModel):
    role: str
    path: str
    sha256: str = Field(..., min_length=64, max_length=64)


class PhantomManifest(BaseModel):
    seed: int
    spec: PhantomSpec
    files: List[ManifestEntry]

    def entry(self, role: str) -> Optional[ManifestEntry]:
        return next((item for item in self.files if item.role == role), None)


# =========================
# Training pairs
# =========================

class PairEntry(BaseModel):
    moving: str
    target: str

    model_config = ConfigDict(frozen=True)


class PairsManifest(BaseModel):
    # Paths are resolved against the manifest's own directory
    pairs: List[PairEntry] = Field(..., min_length=1)


# =========================
# Checkpoints
# =========================

class TensorEntry(BaseModel):
    name: str
    shape: Tuple[int, ...]
    offset: int = Field(..., ge=0)
    nbytes: int = Field(..., ge=0)


class CheckpointManifest(BaseModel):
    stage: str
    role: str
    seed: int
    architecture: dict
    dtype: str = "f32"
    payload: str
    sha256: str = Field(..., min_length=64, max_length=64)
    tensors: List[TensorEntry]

    @field_validator("dtype")
    @classmethod
    def only_float32(cls, dtype):
        if dtype != "f32":
            raise ValueError(f"checkpoint payload must be f32, got {dtype}")
        return dtype
