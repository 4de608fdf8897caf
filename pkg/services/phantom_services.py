"""
Synthetic CBCT-like phantoms with an analytic ground-truth deformation.

The target is drawn directly on the voxel grid. The moving image is the
target pulled through the inverse of the analytic map p -> p + u(p), so
the truth DVF u is exact by construction, not estimated. Fiducial
centers sit on target grid points; their moving positions are
lt + u(lt).
"""

from pathlib import Path
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from constants.exit_codes import ExitCode
from constants.hounsfield import Hounsfield
from core.config import settings
from core.exceptions import DirForgeError
from models.dvf_model import DVF
from models.landmark_model import LandmarkSet
from models.volume_model import Volume
from repositories import landmark_repository, report_repository
from schemas.manifest_schema import ManifestEntry, PhantomManifest
from schemas.phantom_schema import Composite, GaussianBump, PhantomSpec, RigidShift
from services import volume_services
from utils.file_utils import sha256_file, staged_output
from utils.interp_utils import TrilinearStencil
from utils.logger_utils import get_logger

logger = get_logger(__name__)

FIDUCIAL_RADIUS_VOX = 1.5
FIDUCIAL_MIN_SEPARATION_VOX = 4.0
FIDUCIAL_MARGIN_VOX = 3
TEXTURE_SIGMA_VOX = 2.0
TEXTURE_AMPLITUDE_HU = 10.0
TEXTURE_CLIP_HU = 30.0
INVERSE_MAX_ITERATIONS = 100
INVERSE_TOLERANCE_MM = 1e-9


class Phantom(NamedTuple):
    moving: Volume
    target: Volume
    truth_dvf: DVF
    landmarks_moving: LandmarkSet
    landmarks_target: LandmarkSet


# ==============================
# Geometry helpers
# ==============================

def physical_grid(dims: Sequence[int], spacing: Sequence[float]) -> np.ndarray:
    """(3, nx, ny, nz) voxel-center coordinates in mm."""
    axes = [np.arange(n, dtype=np.float64) * s for n, s in zip(dims, spacing)]
    return np.stack(np.meshgrid(*axes, indexing="ij"))


def _extent(dims, spacing) -> np.ndarray:
    return (np.asarray(dims, dtype=np.float64) - 1.0) * np.asarray(spacing, dtype=np.float64)


def _ellipsoid(points: np.ndarray, center, semi_axes) -> np.ndarray:
    center = np.asarray(center, dtype=np.float64).reshape(3, *([1] * (points.ndim - 1)))
    semi = np.asarray(semi_axes, dtype=np.float64).reshape(3, *([1] * (points.ndim - 1)))
    return (((points - center) / semi) ** 2).sum(axis=0) <= 1.0


def _liver_center(dims, spacing) -> np.ndarray:
    extent = _extent(dims, spacing)
    return extent / 2.0 + extent * np.array([-0.12, -0.08, 0.0])


def _snap(point_mm: np.ndarray, spacing) -> np.ndarray:
    spacing = np.asarray(spacing, dtype=np.float64)
    return np.rint(point_mm / spacing) * spacing


def deformation_components(spec: PhantomSpec) -> List:
    deformation = spec.deformation
    if isinstance(deformation, Composite):
        return list(deformation.components)
    return [deformation]


def bump_center(bump: GaussianBump, dims, spacing) -> np.ndarray:
    if bump.center_mm is not None:
        return np.asarray(bump.center_mm, dtype=np.float64)
    return _snap(_liver_center(dims, spacing), spacing)


def analytic_displacement(spec: PhantomSpec, points: np.ndarray) -> np.ndarray:
    """Closed-form displacement in mm at points (3, ...) given in mm."""
    shape = (3,) + (1,) * (points.ndim - 1)
    total = np.zeros_like(points, dtype=np.float64)
    for component in deformation_components(spec):
        if isinstance(component, RigidShift):
            total = total + np.asarray(component.shift_mm, dtype=np.float64).reshape(shape)
        elif isinstance(component, GaussianBump):
            center = bump_center(component, spec.dims, spec.spacing).reshape(shape)
            r2 = ((points - center) ** 2).sum(axis=0)
            profile = np.exp(-r2 / (2.0 * component.sigma_mm ** 2))
            total = total + np.asarray(component.peak_mm, dtype=np.float64).reshape(shape) * profile
    return total


def inverse_positions(spec: PhantomSpec, points: np.ndarray) -> np.ndarray:
    """Solve p + u(p) = x for every x in points by fixed-point iteration."""
    current = points.copy()
    for _ in range(INVERSE_MAX_ITERATIONS):
        updated = points - analytic_displacement(spec, current)
        change = float(np.abs(updated - current).max()) if updated.size else 0.0
        current = updated
        if change <= INVERSE_TOLERANCE_MM:
            return current
    raise DirForgeError(
        exit_code=ExitCode.INTERNAL_ERROR,
        detail=f"analytic inverse did not converge | change_mm={change:.3g}",
    )


# ==============================
# Anatomy
# ==============================

def draw_anatomy(spec: PhantomSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns target HU (without fiducials), body mask and bone mask."""
    dims, spacing = spec.dims, spec.spacing
    points = physical_grid(dims, spacing)
    extent = _extent(dims, spacing)
    center = extent / 2.0

    body = _ellipsoid(points, center, extent * np.array([0.40, 0.35, 0.45]))
    liver = _ellipsoid(points, _liver_center(dims, spacing), extent * np.array([0.15, 0.13, 0.30]))
    spine = _ellipsoid(points, center + extent * np.array([0.0, 0.22, 0.0]), extent * np.array([0.06, 0.06, 0.40]))
    ribs = np.zeros(dims, dtype=bool)
    for side in (-1.0, 1.0):
        rib_center = center + extent * np.array([0.26 * side, 0.10, 0.0])
        ribs |= _ellipsoid(points, rib_center, extent * np.array([0.04, 0.10, 0.35]))
    bone = (spine | ribs) & body

    rng = np.random.default_rng(spec.seed)
    noise = gaussian_filter(rng.standard_normal(dims), sigma=TEXTURE_SIGMA_VOX, mode="nearest")
    noise = noise / max(float(noise.std()), 1e-12)
    texture = np.clip(TEXTURE_AMPLITUDE_HU * noise, -TEXTURE_CLIP_HU, TEXTURE_CLIP_HU)

    hu = np.full(dims, Hounsfield.AIR, dtype=np.float64)
    hu[body] = Hounsfield.WATER + texture[body]
    hu[liver & body] = Hounsfield.LIVER + texture[liver & body]
    hu[bone] = Hounsfield.BONE
    return hu, body, bone


def place_fiducials(spec: PhantomSpec, body: np.ndarray, bone: np.ndarray, truth_mm: np.ndarray) -> np.ndarray:
    """Grid indices (n, 3) of fiducial centers in soft tissue, seeded."""
    dims = np.asarray(spec.dims)
    spacing = np.asarray(spec.spacing, dtype=np.float64)
    margin = FIDUCIAL_MARGIN_VOX

    soft = body & ~bone
    interior = np.zeros(spec.dims, dtype=bool)
    interior[margin:-margin, margin:-margin, margin:-margin] = True
    # the moving-image position must stay inside the grid as well
    moved = np.indices(spec.dims, dtype=np.float64) + truth_mm / spacing.reshape(3, 1, 1, 1)
    moved_inside = np.all((moved >= margin) & (moved <= (dims - 1 - margin).reshape(3, 1, 1, 1)), axis=0)
    candidates = np.argwhere(soft & interior & moved_inside)

    rng = np.random.default_rng([spec.seed, 1])
    chosen: List[np.ndarray] = []
    for index in rng.permutation(len(candidates)):
        point = candidates[index]
        if all(np.linalg.norm(point - other) >= FIDUCIAL_MIN_SEPARATION_VOX for other in chosen):
            chosen.append(point)
            if len(chosen) == spec.landmark_count:
                break

    if len(chosen) < spec.landmark_count:
        raise DirForgeError(
            exit_code=ExitCode.DATA_ERROR,
            detail=f"cannot place {spec.landmark_count} fiducials in a {spec.dims} phantom",
        )
    return np.array(chosen, dtype=np.intp)


def draw_fiducials(hu: np.ndarray, centers: np.ndarray) -> np.ndarray:
    grid = np.indices(hu.shape, dtype=np.float64)
    out = hu.copy()
    for center in centers:
        r2 = ((grid - center.reshape(3, 1, 1, 1)) ** 2).sum(axis=0)
        out[r2 <= FIDUCIAL_RADIUS_VOX ** 2] = Hounsfield.FIDUCIAL
    return out


# ==============================
# Phantom
# ==============================

def make_phantom(spec: PhantomSpec) -> Phantom:
    dims, spacing = spec.dims, spec.spacing
    points = physical_grid(dims, spacing)

    truth_mm = analytic_displacement(spec, points)
    truth_dvf = DVF.from_mm(truth_mm, spacing)

    hu, body, bone = draw_anatomy(spec)
    centers = place_fiducials(spec, body, bone, truth_mm)
    target_hu = np.rint(draw_fiducials(hu, centers))

    # moving(x) = target(p) where p + u(p) = x
    source_mm = inverse_positions(spec, points)
    source_vox = source_mm / np.asarray(spacing, dtype=np.float64).reshape(3, 1, 1, 1)
    moving_hu = np.rint(TrilinearStencil(source_vox, dims).sample(target_hu))

    spacing_arr = np.asarray(spacing, dtype=np.float64)
    target_mm = centers.astype(np.float64) * spacing_arr
    stored_mm = truth_dvf.displacement_mm[:, centers[:, 0], centers[:, 1], centers[:, 2]].T
    moving_mm = target_mm + stored_mm
    ids = list(range(1, len(centers) + 1))

    phantom = Phantom(
        moving=Volume(voxels=moving_hu, spacing=spacing),
        target=Volume(voxels=target_hu, spacing=spacing),
        truth_dvf=truth_dvf,
        landmarks_moving=LandmarkSet.from_arrays(ids, moving_mm),
        landmarks_target=LandmarkSet.from_arrays(ids, target_mm),
    )
    logger.info(
        "Phantom generated | dims=%s kind=%s seed=%d landmarks=%d max_disp_mm=%.4f",
        dims, spec.deformation.kind, spec.seed, len(centers), truth_dvf.max_abs_mm(),
    )
    return phantom


# ==============================
# Export
# ==============================

def generate_phantom_service(spec: PhantomSpec, out_dir) -> PhantomManifest:
    """Writes the phantom files plus manifest.json into out_dir."""
    phantom = make_phantom(spec)
    body = volume_services.threshold_mask(phantom.target, settings.BODY_HU)

    with staged_output(Path(out_dir)) as staging:
        files = [
            ManifestEntry(role="moving", path="moving.json", sha256=volume_services.save_volume(staging / "moving", phantom.moving)),
            ManifestEntry(role="target", path="target.json", sha256=volume_services.save_volume(staging / "target", phantom.target)),
            ManifestEntry(role="truth_dvf", path="truth_dvf.json", sha256=volume_services.save_dvf(staging / "truth_dvf", phantom.truth_dvf)),
            ManifestEntry(role="body_mask", path="body_mask.json", sha256=volume_services.save_mask(staging / "body_mask", body)),
        ]
        for role in ("landmarks_moving", "landmarks_target"):
            csv_path = staging / f"{role}.csv"
            landmark_repository.save_landmarks(csv_path, getattr(phantom, role))
            files.append(ManifestEntry(role=role, path=csv_path.name, sha256=sha256_file(csv_path)))

        manifest = PhantomManifest(seed=spec.seed, spec=spec, files=files)
        report_repository.write_model(staging / "manifest.json", manifest)

    logger.info("Phantom written | out_dir=%s files=%d", out_dir, len(files))
    return manifest
