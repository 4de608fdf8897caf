from typing import List, Sequence, Tuple

import numpy as np
from pydantic import field_validator, model_validator

from models.base_model import ArrayModel, frozen_array
from models.volume_model import _check_spacing


class DVF(ArrayModel):
    """
    Pull displacement field on the target grid, in voxel units:
    displacement[:, x, y, z] = (dx, dy, dz).

    Values are float32; conversion to mm happens in float64 so a
    voxel -> mm -> voxel round trip reproduces the float32 values.
    """

    displacement: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    @field_validator("displacement", mode="before")
    @classmethod
    def three_finite_channels(cls, displacement):
        displacement = np.asarray(displacement)
        if displacement.ndim != 4 or displacement.shape[0] != 3 or min(displacement.shape[1:]) < 1:
            raise ValueError(f"DVF must have shape (3, nx, ny, nz), got {displacement.shape}")
        if not np.all(np.isfinite(displacement)):
            raise ValueError("DVF contains non-finite values")
        return frozen_array(displacement, np.float32)

    @field_validator("spacing", mode="before")
    @classmethod
    def spacing_positive(cls, spacing):
        return _check_spacing(spacing)

    @classmethod
    def zeros(cls, dims: Sequence[int], spacing=(1.0, 1.0, 1.0)) -> "DVF":
        return cls(displacement=np.zeros((3,) + tuple(dims), dtype=np.float32), spacing=spacing)

    @classmethod
    def from_mm(cls, displacement_mm: np.ndarray, spacing) -> "DVF":
        scale = np.asarray(spacing, dtype=np.float64).reshape(3, 1, 1, 1)
        return cls(displacement=np.asarray(displacement_mm, dtype=np.float64) / scale, spacing=spacing)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.displacement.shape[1:])

    @property
    def displacement_mm(self) -> np.ndarray:
        scale = np.asarray(self.spacing, dtype=np.float64).reshape(3, 1, 1, 1)
        return self.displacement.astype(np.float64) * scale

    def max_abs_mm(self) -> float:
        return float(np.sqrt((self.displacement_mm ** 2).sum(axis=0)).max())


class PatchGrid(ArrayModel):
    patch_size: Tuple[int, int, int]
    stride: Tuple[int, int, int]
    volume_dims: Tuple[int, int, int]
    starts: List[Tuple[int, int, int]]

    @model_validator(mode="after")
    def patches_inside_and_covering(self):
        if not self.starts:
            raise ValueError("patch grid is empty")
        for start in self.starts:
            if any(s < 0 or s + p > n for s, p, n in zip(start, self.patch_size, self.volume_dims)):
                raise ValueError(f"patch at {start} leaves the volume {self.volume_dims}")
        for axis in range(3):
            covered = np.zeros(self.volume_dims[axis], dtype=bool)
            for start in {s[axis] for s in self.starts}:
                covered[start:start + self.patch_size[axis]] = True
            if not covered.all():
                raise ValueError(f"patch grid leaves voxels uncovered along axis {axis}")
        return self

    def __len__(self) -> int:
        return len(self.starts)

    def slices(self, index: int) -> Tuple[slice, slice, slice]:
        return tuple(slice(s, s + p) for s, p in zip(self.starts[index], self.patch_size))
