from typing import Tuple

import numpy as np
from pydantic import field_validator

from models.base_model import ArrayModel, frozen_array


class MindDescriptor(ArrayModel):
    # (K, nx, ny, nz), one channel per neighborhood offset
    channels: np.ndarray
    neighborhood: Tuple[Tuple[int, int, int], ...]

    @field_validator("channels", mode="before")
    @classmethod
    def channels_in_unit_range(cls, channels):
        channels = np.asarray(channels)
        if channels.ndim != 4:
            raise ValueError(f"descriptor must be (K, nx, ny, nz), got {channels.shape}")
        if not np.all((channels >= 0.0) & (channels <= 1.0)):
            raise ValueError("descriptor values must lie in [0, 1]")
        return frozen_array(channels, np.float32)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.channels.shape[1:])

    @property
    def channel_count(self) -> int:
        return int(self.channels.shape[0])
