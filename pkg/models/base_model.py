import numpy as np
from pydantic import BaseModel, ConfigDict


def frozen_array(array, dtype) -> np.ndarray:
    """Private read-only copy, so instances can be shared across workers."""
    out = np.array(array, dtype=dtype, copy=True, order="C")
    out.setflags(write=False)
    return out


class ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
