from typing import Tuple

import numpy as np
from pydantic import field_validator, model_validator

from models.base_model import ArrayModel, frozen_array


def _check_spacing(spacing):
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise ValueError(f"spacing must be three positive numbers, got {spacing}")
    return spacing


class Volume(ArrayModel):
    """Scalar HU grid indexed voxels[x, y, z]."""

    voxels: np.ndarray
    spacing: Tuple[float, float, float]

    @field_validator("voxels", mode="before")
    @classmethod
    def voxels_are_finite_3d(cls, voxels):
        voxels = np.asarray(voxels)
        if voxels.ndim != 3 or min(voxels.shape) < 1:
            raise ValueError(f"volume must be a non-empty 3-D grid, got shape {voxels.shape}")
        if not np.all(np.isfinite(voxels)):
            raise ValueError("volume contains non-finite values")
        return frozen_array(voxels, np.float32)

    @field_validator("spacing", mode="before")
    @classmethod
    def spacing_positive(cls, spacing):
        return _check_spacing(spacing)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.voxels.shape)

    def with_voxels(self, voxels: np.ndarray) -> "Volume":
        return Volume(voxels=voxels, spacing=self.spacing)


class Mask(ArrayModel):
    bits: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    @field_validator("bits", mode="before")
    @classmethod
    def bits_are_3d(cls, bits):
        bits = np.asarray(bits)
        if bits.ndim != 3:
            raise ValueError(f"mask must be a 3-D grid, got shape {bits.shape}")
        return frozen_array(bits != 0, bool)

    @field_validator("spacing", mode="before")
    @classmethod
    def spacing_positive(cls, spacing):
        return _check_spacing(spacing)

    @model_validator(mode="after")
    def population_in_range(self):
        if not 0 <= self.population <= self.bits.size:
            raise ValueError("mask population out of range")
        return self

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.bits.shape)

    @property
    def population(self) -> int:
        return int(np.count_nonzero(self.bits))
