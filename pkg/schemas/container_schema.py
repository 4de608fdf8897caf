from typing import Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator


# =========================
# Container header (<name>.json next to <name>.bin)
# =========================

DTYPE_BYTES = {"f32": 4, "f64": 8}
NUMPY_DTYPES = {"f32": "<f4", "f64": "<f8"}


class ContainerHeader(BaseModel):
    dims: Tuple[int, int, int]
    spacing_mm: Tuple[float, float, float]
    dtype: Literal["f32", "f64"] = "f32"
    channels: Literal[1, 3] = 1
    kind: Literal["volume", "mask", "dvf"] = "volume"

    model_config = ConfigDict(frozen=True)

    @field_validator("dims")
    @classmethod
    def dims_positive(cls, dims):
        if any(n < 1 for n in dims):
            raise ValueError(f"dims must be >= 1, got {dims}")
        return dims

    @field_validator("spacing_mm")
    @classmethod
    def spacing_positive(cls, spacing):
        if any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be > 0, got {spacing}")
        return spacing

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def payload_bytes(self) -> int:
        return self.voxel_count * self.channels * DTYPE_BYTES[self.dtype]


class ContainerSummary(BaseModel):
    """Header plus payload statistics printed by `info`."""

    path: str
    kind: str
    dims: Tuple[int, int, int]
    spacing_mm: Tuple[float, float, float]
    channels: int
    dtype: str
    min: float
    max: float
    sha256: str = Field(..., min_length=64, max_length=64)
