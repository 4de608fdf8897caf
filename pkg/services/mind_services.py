"""
MIND Descriptor

For voxel p and offset r:
    D(p, r) = box_mean[(I - I o shift_r)^2](p)
    V(p)    = max(mean of D over the six unit offsets, eps)
    c_r(p)  = exp(-D(p, r) / V(p)) / max_r' exp(-D(p, r') / V(p))

with eps = 1e-6 * (max I - min I)^2 and every shift clamped to the
border. `mind` is the float64 reference; `mind_tensor` builds the same
descriptor on the autodiff graph for the similarity loss.
"""

from typing import Sequence, Tuple

import numpy as np

from constants.exit_codes import ExitCode
from constants.geometry import SIX_NEIGHBORHOOD
from core.exceptions import DirForgeError
from models.mind_model import MindDescriptor
from models.volume_model import Volume
from nn import functional as F
from nn.layers import shift_clamped
from nn.tensor import Tensor
from schemas.config_schema import MindConfig

EPS_SCALE = 1e-6
EPS_MIN = 1e-12

Offset = Tuple[int, int, int]


def check_neighborhood(dims: Sequence[int], neighborhood: Sequence[Offset], patch_radius: int) -> None:
    if patch_radius < 1:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"MIND patch radius must be >= 1, got {patch_radius}")
    if not neighborhood:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail="MIND neighborhood is empty")
    for offset in neighborhood:
        if any(abs(int(o)) >= n for o, n in zip(offset, dims)):
            raise DirForgeError(
                exit_code=ExitCode.DATA_ERROR,
                detail=f"MIND offset {tuple(offset)} exceeds volume dims {tuple(dims)}",
            )


def variance_floor(value_range: float) -> float:
    return max(EPS_SCALE * value_range * value_range, EPS_MIN)


# ==============================
# Reference forward (numpy)
# ==============================

def _shift(values: np.ndarray, offset: Sequence[int]) -> np.ndarray:
    out = values
    for axis, step in enumerate(offset):
        n = values.shape[axis]
        out = np.take(out, np.clip(np.arange(n) + int(step), 0, n - 1), axis=axis)
    return out


def _box_mean(values: np.ndarray, radius: int) -> np.ndarray:
    out = values
    for axis in range(3):
        total = np.zeros_like(out)
        for step in range(-radius, radius + 1):
            offset = [0, 0, 0]
            offset[axis] = step
            total = total + _shift(out, offset)
        out = total / (2 * radius + 1)
    return out


def patch_distance(values: np.ndarray, offset: Offset, radius: int) -> np.ndarray:
    diff = values - _shift(values, offset)
    return _box_mean(diff * diff, radius)


def mind(vol: Volume, patch_radius: int = 1, neighborhood: Sequence[Offset] = SIX_NEIGHBORHOOD) -> MindDescriptor:
    neighborhood = tuple(tuple(int(o) for o in offset) for offset in neighborhood)
    check_neighborhood(vol.dims, neighborhood, patch_radius)

    values = vol.voxels.astype(np.float64)
    eps = variance_floor(float(values.max() - values.min()))

    distances = {offset: patch_distance(values, offset, patch_radius) for offset in neighborhood}
    for offset in SIX_NEIGHBORHOOD:
        if offset not in distances:
            distances[offset] = patch_distance(values, offset, patch_radius)
    variance = np.maximum(np.mean([distances[offset] for offset in SIX_NEIGHBORHOOD], axis=0), eps)

    channels = np.stack([np.exp(-distances[offset] / variance) for offset in neighborhood])
    channels = channels / channels.max(axis=0, keepdims=True)
    return MindDescriptor(channels=channels, neighborhood=neighborhood)


# ==============================
# Differentiable forward
# ==============================

def _box_mean_tensor(t: Tensor, radius: int) -> Tensor:
    out = t
    for axis in range(3):
        total = None
        for step in range(-radius, radius + 1):
            offset = [0, 0, 0]
            offset[axis] = step
            shifted = shift_clamped(out, offset)
            total = shifted if total is None else total + shifted
        out = total / float(2 * radius + 1)
    return out


def _patch_distance_tensor(t: Tensor, offset: Offset, radius: int) -> Tensor:
    diff = t - shift_clamped(t, offset)
    return _box_mean_tensor(F.square(diff), radius)


def mind_tensor(image: Tensor, config: MindConfig) -> Tensor:
    """image (N, 1, X, Y, Z) -> descriptor (N, K, X, Y, Z) on the graph."""
    if image.ndim != 5 or image.shape[1] != 1:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"MIND expects (N, 1, X, Y, Z), got {image.shape}")
    neighborhood = tuple(tuple(int(o) for o in offset) for offset in config.neighborhood)
    check_neighborhood(image.shape[2:], neighborhood, config.patch_radius)

    data = image.data.astype(np.float64)
    value_range = data.max(axis=(1, 2, 3, 4)) - data.min(axis=(1, 2, 3, 4))
    eps = np.array([variance_floor(float(r)) for r in value_range], dtype=image.dtype).reshape(-1, 1, 1, 1, 1)

    distances = {offset: _patch_distance_tensor(image, offset, config.patch_radius) for offset in neighborhood}
    for offset in SIX_NEIGHBORHOOD:
        if offset not in distances:
            distances[offset] = _patch_distance_tensor(image, offset, config.patch_radius)
    six = F.concat([distances[offset] for offset in SIX_NEIGHBORHOOD], axis=1)
    variance = F.maximum(F.mean(six, axis=1, keepdims=True), eps)

    channels = F.concat([F.exp(-(distances[offset] / variance)) for offset in neighborhood], axis=1)
    return channels / F.max(channels, axis=1, keepdims=True)
