import math
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np

from constants.exit_codes import ExitCode
from constants.geometry import GENERATOR_REDUCTION
from constants.hounsfield import Hounsfield
from core.exceptions import DirForgeError
from models.dvf_model import DVF
from models.volume_model import Mask, Volume
from repositories import volume_repository
from schemas.container_schema import ContainerHeader, ContainerSummary
from utils import image_utils
from utils.logger_utils import get_logger

logger = get_logger(__name__)


# ==============================
# Container I/O
# ==============================

def load_volume(path) -> Volume:
    header, array = volume_repository.read_container(path)
    if header.channels != 1:
        raise DirForgeError(
            exit_code=ExitCode.DATA_ERROR,
            detail=f"expected a 1-channel volume, {path} has {header.channels} channels",
        )
    if header.dtype != "f32":
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"unsupported dtype {header.dtype} for a volume")
    if not np.all(np.isfinite(array)):
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"non-finite values in {path}")
    return Volume(voxels=array[0], spacing=header.spacing_mm)


def save_volume(path, vol: Volume) -> str:
    header = ContainerHeader(dims=vol.dims, spacing_mm=vol.spacing, dtype="f32", channels=1, kind="volume")
    return volume_repository.write_container(path, vol.voxels, header)


def load_mask(path) -> Mask:
    header, array = volume_repository.read_container(path)
    if header.channels != 1 or header.dtype != "f32":
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"{path} is not an f32 1-channel mask")
    values = array[0]
    if not np.all((values == 0.0) | (values == 1.0)):
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"mask {path} holds values other than 0 and 1")
    return Mask(bits=values == 1.0, spacing=header.spacing_mm)


def save_mask(path, mask: Mask) -> str:
    header = ContainerHeader(dims=mask.dims, spacing_mm=mask.spacing, dtype="f32", channels=1, kind="mask")
    return volume_repository.write_container(path, mask.bits.astype(np.float32), header)


def load_dvf(path) -> DVF:
    header, array = volume_repository.read_container(path)
    if header.channels != 3:
        raise DirForgeError(
            exit_code=ExitCode.DATA_ERROR,
            detail=f"expected a 3-channel DVF, {path} has {header.channels} channels",
        )
    if not np.all(np.isfinite(array)):
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"non-finite values in {path}")
    return DVF.from_mm(array, header.spacing_mm)


def save_dvf(path, dvf: DVF) -> str:
    header = ContainerHeader(dims=dvf.dims, spacing_mm=dvf.spacing, dtype="f64", channels=3, kind="dvf")
    return volume_repository.write_container(path, dvf.displacement_mm, header)


def payload_checksum(path) -> str:
    return volume_repository.payload_checksum(path)


# ==============================
# Masks
# ==============================

def threshold_mask(vol: Volume, hu_min: float) -> Mask:
    return Mask(bits=vol.voxels > hu_min, spacing=vol.spacing)


def check_same_dims(*items, what: str = "inputs") -> Tuple[int, int, int]:
    dims = {tuple(item.dims) for item in items}
    if len(dims) != 1:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"dimension mismatch between {what}: {sorted(dims)}")
    return dims.pop()


# ==============================
# Global-stage input preparation
# ==============================

def edge_pad(array: np.ndarray, target_dims: Sequence[int]) -> np.ndarray:
    """Replicate the high faces of the last three axes up to target_dims."""
    lead = [(0, 0)] * (array.ndim - 3)
    pads = [(0, int(t) - n) for n, t in zip(array.shape[-3:], target_dims)]
    return np.pad(array, lead + pads, mode="edge")


def mean_pool(array: np.ndarray, factors: Sequence[int]) -> np.ndarray:
    """Block mean over the last three axes; edges are replicated to a multiple of the factor."""
    factors = tuple(int(f) for f in factors)
    if all(f == 1 for f in factors):
        return np.asarray(array, dtype=np.float32).copy()
    padded_dims = [math.ceil(n / f) * f for n, f in zip(array.shape[-3:], factors)]
    padded = edge_pad(np.asarray(array, dtype=np.float64), padded_dims)
    lead = padded.shape[:-3]
    X, Y, Z = padded_dims
    fx, fy, fz = factors
    blocks = padded.reshape(lead + (X // fx, fx, Y // fy, fy, Z // fz, fz))
    n = len(lead)
    return blocks.mean(axis=(n + 1, n + 3, n + 5)).astype(np.float32)


def pool_factors(dims: Sequence[int], target: int) -> Tuple[int, int, int]:
    return tuple(max(1, math.ceil(n / target)) for n in dims)


def network_dims(dims: Sequence[int], multiple: int = GENERATOR_REDUCTION, minimum: int = 16) -> Tuple[int, int, int]:
    return tuple(max(minimum, math.ceil(n / multiple) * multiple) for n in dims)


def prepare_global_input(vol: Volume, target: int) -> Tuple[np.ndarray, Tuple[int, int, int]]:
    """
    Mean-pool a volume so no axis exceeds `target`, then edge-pad to a
    generator-compatible grid. Returns the padded array and the pooled
    (unpadded) dims the predicted field is cropped back to.
    """
    pooled = mean_pool(vol.voxels, pool_factors(vol.dims, target))
    pooled_dims = tuple(int(n) for n in pooled.shape)
    padded = edge_pad(pooled, network_dims(pooled_dims))
    logger.debug("Prepared global input | dims=%s pooled=%s padded=%s", vol.dims, pooled_dims, padded.shape)
    return padded, pooled_dims


# ==============================
# Inspection
# ==============================

def describe_container(path) -> ContainerSummary:
    header, array = volume_repository.read_container(path)
    finite = array[np.isfinite(array)]
    return ContainerSummary(
        path=str(volume_repository.container_paths(path)[0]),
        kind=header.kind,
        dims=header.dims,
        spacing_mm=header.spacing_mm,
        channels=header.channels,
        dtype=header.dtype,
        min=float(finite.min()) if finite.size else float("nan"),
        max=float(finite.max()) if finite.size else float("nan"),
        sha256=volume_repository.payload_checksum(path),
    )


def axial_slice(path, z: int) -> np.ndarray:
    header, array = volume_repository.read_container(path)
    if header.channels != 1:
        raise DirForgeError(exit_code=ExitCode.USAGE_ERROR, detail=f"slice renders need a 1-channel container, {path} has {header.channels}")
    if not 0 <= z < header.dims[2]:
        raise DirForgeError(exit_code=ExitCode.USAGE_ERROR, detail=f"slice z={z} is outside 0..{header.dims[2] - 1}")
    return np.asarray(array[0, :, :, z], dtype=np.float64)


def render_slice(path, z: int, out_path, window=Hounsfield.WINDOW, fusion_path=None) -> Path:
    """Axial slice as PGM, or a red/green PPM fusion with a second container."""
    first = axial_slice(path, z)
    out_path = Path(out_path)
    if fusion_path is None:
        image_utils.write_pgm(out_path, first, window)
    else:
        second = axial_slice(fusion_path, z)
        if second.shape != first.shape:
            raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"fusion slices differ in shape: {first.shape} vs {second.shape}")
        image_utils.write_ppm_fusion(out_path, first, second, window)
    logger.info("Slice rendered | path=%s z=%d out=%s fusion=%s", path, z, out_path, fusion_path is not None)
    return out_path
