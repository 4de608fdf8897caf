"""
Portable graymap / pixmap writers for axial slice renders.
"""

from pathlib import Path
from typing import Tuple

import numpy as np

from constants.exit_codes import ExitCode
from constants.hounsfield import Hounsfield
from core.exceptions import DirForgeError
from utils.file_utils import atomic_write_bytes


def window_to_bytes(values: np.ndarray, window: Tuple[float, float] = Hounsfield.WINDOW) -> np.ndarray:
    low, high = float(window[0]), float(window[1])
    if high <= low:
        raise DirForgeError(exit_code=ExitCode.USAGE_ERROR, detail=f"window upper bound must exceed lower bound, got {window}")
    scaled = (np.asarray(values, dtype=np.float64) - low) / (high - low)
    return np.rint(np.clip(scaled, 0.0, 1.0) * 255.0).astype(np.uint8)


def _raster(slice_xy: np.ndarray) -> np.ndarray:
    # rows run along y, columns along x
    return np.ascontiguousarray(np.asarray(slice_xy).T)


def pgm_bytes(slice_xy: np.ndarray, window=Hounsfield.WINDOW) -> bytes:
    pixels = _raster(window_to_bytes(slice_xy, window))
    rows, cols = pixels.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + pixels.tobytes()


def ppm_fusion_bytes(red_xy: np.ndarray, green_xy: np.ndarray, window=Hounsfield.WINDOW) -> bytes:
    """Red channel from the first slice, green from the second; overlap shows yellow."""
    red = _raster(window_to_bytes(red_xy, window))
    green = _raster(window_to_bytes(green_xy, window))
    rgb = np.stack([red, green, np.zeros_like(red)], axis=-1)
    rows, cols = red.shape
    return f"P6\n{cols} {rows}\n255\n".encode("ascii") + np.ascontiguousarray(rgb).tobytes()


def write_pgm(path, slice_xy: np.ndarray, window=Hounsfield.WINDOW) -> None:
    atomic_write_bytes(Path(path), pgm_bytes(slice_xy, window))


def write_ppm_fusion(path, red_xy: np.ndarray, green_xy: np.ndarray, window=Hounsfield.WINDOW) -> None:
    atomic_write_bytes(Path(path), ppm_fusion_bytes(red_xy, green_xy, window))
