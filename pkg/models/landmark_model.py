from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator


class Landmark(BaseModel):
    id: int
    position_mm: Tuple[float, float, float]

    model_config = ConfigDict(frozen=True)


class LandmarkSet(BaseModel):
    """Landmarks in mm, relative to the center of voxel (0, 0, 0)."""

    entries: List[Landmark]

    model_config = ConfigDict(frozen=True)

    @field_validator("entries")
    @classmethod
    def ids_unique(cls, entries):
        ids = [entry.id for entry in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("landmark ids must be unique")
        return entries

    @classmethod
    def from_arrays(cls, ids, positions_mm) -> "LandmarkSet":
        positions_mm = np.asarray(positions_mm, dtype=np.float64).reshape(-1, 3)
        return cls(entries=[
            Landmark(id=int(i), position_mm=tuple(float(v) for v in p))
            for i, p in zip(ids, positions_mm)
        ])

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> List[int]:
        return [entry.id for entry in self.entries]

    def positions(self) -> np.ndarray:
        """(n, 3) float64 positions in mm, in entry order."""
        if not self.entries:
            return np.zeros((0, 3), dtype=np.float64)
        return np.array([entry.position_mm for entry in self.entries], dtype=np.float64)

    def by_id(self) -> Dict[int, np.ndarray]:
        return {entry.id: np.asarray(entry.position_mm, dtype=np.float64) for entry in self.entries}

    def inside(self, dims, spacing) -> bool:
        extent = (np.asarray(dims, dtype=np.float64) - 1.0) * np.asarray(spacing, dtype=np.float64)
        positions = self.positions()
        return bool(np.all((positions >= 0.0) & (positions <= extent)))
