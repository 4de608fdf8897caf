"""
Spatial transformer on plain arrays: warping, field resizing,
composition, patch grids and patch fusion.

All fields are pull fields in voxel units on the grid they are stored
on: warp(v, u)(p) = v(p + u(p)). Samples leaving the grid are clamped
to the border.
"""

from typing import List, Optional, Sequence

import numpy as np

from constants.exit_codes import ExitCode
from core.exceptions import DirForgeError
from models.dvf_model import DVF, PatchGrid
from models.landmark_model import LandmarkSet
from models.volume_model import Volume
from utils.interp_utils import TrilinearStencil, identity_grid, resize_positions
from utils.logger_utils import get_logger

logger = get_logger(__name__)

TAPER_FLOOR = 0.05


def _mismatch(detail: str) -> DirForgeError:
    return DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=detail)


# ==============================
# Warping
# ==============================

def warp_array(values: np.ndarray, displacement: np.ndarray) -> np.ndarray:
    """values (..., X, Y, Z), displacement (3, X, Y, Z) -> float64 (..., X, Y, Z)."""
    dims = displacement.shape[1:]
    if tuple(values.shape[-3:]) != tuple(dims):
        raise _mismatch(f"warp: volume dims {values.shape[-3:]} != DVF dims {dims}")
    stencil = TrilinearStencil(identity_grid(dims) + displacement, dims)
    return stencil.sample(values)


def warp(vol: Volume, dvf: DVF) -> Volume:
    if vol.dims != dvf.dims:
        raise _mismatch(f"warp: volume dims {vol.dims} != DVF dims {dvf.dims}")
    return vol.with_voxels(warp_array(vol.voxels, dvf.displacement).astype(np.float32))


# ==============================
# Field resizing and composition
# ==============================

def resize_field(displacement: np.ndarray, target_dims: Sequence[int]) -> np.ndarray:
    """Voxel-center aligned trilinear resize; displacements rescale by the axis ratio."""
    dims = displacement.shape[1:]
    target_dims = tuple(int(n) for n in target_dims)
    if target_dims == tuple(dims):
        return np.asarray(displacement, dtype=np.float64).copy()
    stencil = TrilinearStencil(resize_positions(dims, target_dims), dims)
    resized = stencil.sample(displacement)
    ratios = np.array([t / n for t, n in zip(target_dims, dims)], dtype=np.float64)
    return resized * ratios.reshape(3, 1, 1, 1)


def upsample_dvf(dvf: DVF, target_dims: Sequence[int], spacing: Optional[Sequence[float]] = None) -> DVF:
    target_dims = tuple(int(n) for n in target_dims)
    if any(t < n for t, n in zip(target_dims, dvf.dims)):
        raise _mismatch(f"upsample_dvf: target {target_dims} is smaller than the field {dvf.dims}")
    if spacing is None:
        spacing = tuple(s * n / t for s, n, t in zip(dvf.spacing, dvf.dims, target_dims))
    return DVF(displacement=resize_field(dvf.displacement, target_dims), spacing=spacing)


def sample_field(displacement: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Trilinear sample of a (3, X, Y, Z) field at voxel positions (3, ...)."""
    stencil = TrilinearStencil(positions, displacement.shape[1:])
    return stencil.sample(displacement)


def compose(global_dvf: DVF, local_dvf: DVF) -> DVF:
    """result(p) = global(p + local(p)) + local(p)."""
    if global_dvf.dims != local_dvf.dims:
        raise _mismatch(f"compose: global dims {global_dvf.dims} != local dims {local_dvf.dims}")
    local = local_dvf.displacement.astype(np.float64)
    positions = identity_grid(local_dvf.dims) + local
    combined = sample_field(global_dvf.displacement, positions) + local
    return DVF(displacement=combined, spacing=global_dvf.spacing)


# ==============================
# Landmarks
# ==============================

def map_landmarks(
    landmarks_moving: LandmarkSet,
    dvf: DVF,
    max_iterations: int = 50,
    tolerance_mm: float = 1e-6,
) -> LandmarkSet:
    """
    Target-grid position y of each moving landmark P, i.e. the solution
    of y + u(y) = P, found by fixed-point iteration in mm.
    """
    if len(landmarks_moving) == 0:
        return LandmarkSet(entries=[])

    spacing = np.asarray(dvf.spacing, dtype=np.float64).reshape(3, 1)
    moving = landmarks_moving.positions().T
    current = moving.copy()
    residual = np.inf
    for _ in range(max_iterations):
        displacement_mm = sample_field(dvf.displacement, current / spacing) * spacing
        updated = moving - displacement_mm
        residual = float(np.abs(updated - current).max())
        current = updated
        if residual <= tolerance_mm:
            break
    else:
        logger.warning("Landmark mapping did not converge | residual_mm=%.3g iterations=%d", residual, max_iterations)

    return LandmarkSet.from_arrays(landmarks_moving.ids, current.T)


# ==============================
# Patch grid
# ==============================

def _axis_starts(n: int, patch: int, stride: int) -> List[int]:
    starts = list(range(0, n - patch + 1, stride))
    if starts[-1] + patch < n:
        starts.append(n - patch)
    return starts


def build_patch_grid(volume_dims: Sequence[int], patch_size: Sequence[int], overlap: Sequence[int]) -> PatchGrid:
    volume_dims = tuple(int(n) for n in volume_dims)
    patch_size = tuple(int(p) for p in patch_size)
    overlap = tuple(int(o) for o in overlap)
    if any(p > n for p, n in zip(patch_size, volume_dims)):
        raise _mismatch(f"patch {patch_size} is larger than the volume {volume_dims}")
    if any(o < 0 or o >= p for o, p in zip(overlap, patch_size)):
        raise _mismatch(f"overlap {overlap} must be in [0, patch) per axis for patch {patch_size}")

    stride = tuple(p - o for p, o in zip(patch_size, overlap))
    xs, ys, zs = (_axis_starts(n, p, s) for n, p, s in zip(volume_dims, patch_size, stride))
    starts = [(x, y, z) for z in zs for y in ys for x in xs]
    logger.debug("Patch grid built | dims=%s patch=%s stride=%s patches=%d", volume_dims, patch_size, stride, len(starts))
    return PatchGrid(patch_size=patch_size, stride=stride, volume_dims=volume_dims, starts=starts)


def extract_patches(array: np.ndarray, grid: PatchGrid) -> List[np.ndarray]:
    """Sub-volumes of array (..., X, Y, Z) in grid order."""
    if tuple(array.shape[-3:]) != grid.volume_dims:
        raise _mismatch(f"extract_patches: array dims {array.shape[-3:]} != grid dims {grid.volume_dims}")
    return [np.array(array[(Ellipsis,) + grid.slices(i)]) for i in range(len(grid))]


# ==============================
# Patch fusion
# ==============================

def taper_1d(length: int, floor: float = TAPER_FLOOR) -> np.ndarray:
    if length == 1:
        return np.ones(1, dtype=np.float64)
    center = (length - 1) / 2.0
    distance = np.abs(np.arange(length, dtype=np.float64) - center) / center
    return 1.0 - (1.0 - floor) * distance


def taper_weights(patch_size: Sequence[int], floor: float = TAPER_FLOOR) -> np.ndarray:
    wx, wy, wz = (taper_1d(int(p), floor) for p in patch_size)
    return wx[:, None, None] * wy[None, :, None] * wz[None, None, :]


def fuse_patches(patch_dvfs: Sequence[DVF], grid: PatchGrid, spacing: Optional[Sequence[float]] = None) -> DVF:
    if len(patch_dvfs) != len(grid):
        raise _mismatch(f"fuse_patches: {len(patch_dvfs)} patches for a grid of {len(grid)}")
    weights = taper_weights(grid.patch_size)
    numerator = np.zeros((3,) + grid.volume_dims, dtype=np.float64)
    denominator = np.zeros(grid.volume_dims, dtype=np.float64)

    for index, patch in enumerate(patch_dvfs):
        if patch.dims != grid.patch_size:
            raise _mismatch(f"fuse_patches: patch {index} has dims {patch.dims}, grid expects {grid.patch_size}")
        region = grid.slices(index)
        numerator[(slice(None),) + region] += weights * patch.displacement
        denominator[region] += weights

    if spacing is None:
        spacing = patch_dvfs[0].spacing
    return DVF(displacement=numerator / denominator, spacing=spacing)


def crop(array: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    nx, ny, nz = (int(n) for n in dims)
    return np.array(array[..., :nx, :ny, :nz])

