"""
Registration quality metrics.

TRE is measured between target landmarks and moving landmarks mapped
through the predicted field. MAE and NCC use one body mask taken from
the target volume and applied to both images. DSC compares bone masks
thresholded from each image.
"""

from contextlib import ExitStack
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from constants.exit_codes import ExitCode
from core.config import settings
from core.exceptions import DirForgeError
from models.dvf_model import DVF
from models.landmark_model import LandmarkSet
from models.volume_model import Mask, Volume
from repositories import landmark_repository, report_repository
from schemas.report_schema import EvaluationReport, MetricReport
from services import transform_services, volume_services
from utils.file_utils import staged_output
from utils.logger_utils import get_logger

logger = get_logger(__name__)

OVERALL = "overall"


def _data_error(detail: str) -> DirForgeError:
    return DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=detail)


# ==============================
# Landmark error
# ==============================

def tre(deformed_landmarks: LandmarkSet, target_landmarks: LandmarkSet) -> List[float]:
    """Euclidean mm distance per id, in ascending id order."""
    deformed = deformed_landmarks.by_id()
    target = target_landmarks.by_id()
    if set(deformed) != set(target):
        missing = sorted(set(deformed) ^ set(target))
        raise _data_error(f"tre: landmark ids do not match, unpaired ids {missing}")
    return [float(np.linalg.norm(deformed[i] - target[i])) for i in sorted(target)]


# ==============================
# Intensity metrics
# ==============================

def _masked_pair(deformed: Volume, target: Volume, body: Mask, what: str) -> Tuple[np.ndarray, np.ndarray]:
    volume_services.check_same_dims(deformed, target, body, what=f"{what} inputs")
    if body.population == 0:
        raise _data_error(f"{what}: body mask is empty")
    return (
        deformed.voxels[body.bits].astype(np.float64),
        target.voxels[body.bits].astype(np.float64),
    )


def mae(deformed: Volume, target: Volume, body: Mask) -> float:
    d, t = _masked_pair(deformed, target, body, "mae")
    return float(np.abs(d - t).mean())


def ncc_metric(deformed: Volume, target: Volume, body: Mask) -> float:
    d, t = _masked_pair(deformed, target, body, "ncc")
    dd = d - d.mean()
    dt = t - t.mean()
    var_d = float((dd * dd).sum())
    var_t = float((dt * dt).sum())
    if var_d <= 0.0 or var_t <= 0.0:
        raise _data_error("ncc: zero intensity variance inside the body mask")
    value = float((dd * dt).sum()) / np.sqrt(var_d * var_t)
    return float(np.clip(value, -1.0, 1.0))


def dsc(mask_d: Mask, mask_t: Mask) -> float:
    volume_services.check_same_dims(mask_d, mask_t, what="dsc masks")
    total = mask_d.population + mask_t.population
    if total == 0:
        raise _data_error("dsc: both masks are empty")
    overlap = int(np.count_nonzero(mask_d.bits & mask_t.bits))
    return 2.0 * overlap / total


# ==============================
# Field quality
# ==============================

def jacobian_determinant(dvf: DVF) -> np.ndarray:
    """det(I + grad u) on interior voxels; empty when an axis has fewer than 3 voxels."""
    if min(dvf.dims) < 3:
        return np.zeros((0, 0, 0), dtype=np.float64)
    u = dvf.displacement.astype(np.float64)
    jac = np.empty((3, 3) + tuple(n - 2 for n in dvf.dims), dtype=np.float64)
    for axis in range(3):
        ahead = [slice(None), slice(1, -1), slice(1, -1), slice(1, -1)]
        behind = list(ahead)
        ahead[axis + 1] = slice(2, None)
        behind[axis + 1] = slice(None, -2)
        # jac[i, j] = d u_i / d x_j
        jac[:, axis] = (u[tuple(ahead)] - u[tuple(behind)]) / 2.0
    for axis in range(3):
        jac[axis, axis] += 1.0
    return np.linalg.det(np.moveaxis(jac, (0, 1), (-2, -1)))


def jacobian_report(dvf: DVF) -> Tuple[float, float]:
    """(minimum determinant, share of interior voxels with det <= 0)."""
    det = jacobian_determinant(dvf)
    if det.size == 0:
        return 1.0, 0.0
    return float(det.min()), float(np.count_nonzero(det <= 0.0) / det.size)


# ==============================
# Difference images
# ==============================

def difference_volume(deformed: Volume, target: Volume) -> Volume:
    volume_services.check_same_dims(deformed, target, what="difference inputs")
    diff = np.abs(deformed.voxels.astype(np.float64) - target.voxels.astype(np.float64))
    return target.with_voxels(diff.astype(np.float32))


def difference_profile(deformed: Volume, target: Volume, x: int, z: int) -> np.ndarray:
    """Absolute HU difference along y at column (x, z)."""
    nx, _, nz = volume_services.check_same_dims(deformed, target, what="profile inputs")
    if not (0 <= x < nx and 0 <= z < nz):
        raise _data_error(f"profile column ({x}, {z}) is outside dims {deformed.dims}")
    return difference_volume(deformed, target).voxels[x, :, z].astype(np.float64)


# ==============================
# Reports
# ==============================

def evaluate_pair(
    deformed: Volume,
    target: Volume,
    dvf: DVF,
    landmarks_moving: LandmarkSet,
    landmarks_target: LandmarkSet,
    body_hu: float = None,
    bone_hu: float = None,
    fraction: str = "fx1",
) -> MetricReport:
    body_hu = settings.BODY_HU if body_hu is None else body_hu
    bone_hu = settings.BONE_HU if bone_hu is None else bone_hu
    volume_services.check_same_dims(deformed, target, dvf, what="evaluation inputs")
    if len(landmarks_target) == 0:
        raise _data_error("evaluate: no landmarks to measure")

    distances = tre(transform_services.map_landmarks(landmarks_moving, dvf), landmarks_target)
    body = volume_services.threshold_mask(target, body_hu)
    jac_min, fold_fraction = jacobian_report(dvf)

    report = MetricReport(
        fraction=fraction,
        tre_per_landmark=distances,
        tre_mean=float(np.mean(distances)),
        tre_std=float(np.std(distances)),
        mae=mae(deformed, target, body),
        ncc=ncc_metric(deformed, target, body),
        dsc=dsc(volume_services.threshold_mask(deformed, bone_hu), volume_services.threshold_mask(target, bone_hu)),
        jacobian_min=jac_min,
        fold_fraction=fold_fraction,
    )
    logger.info(
        "Pair evaluated | fraction=%s tre_mean=%.4f mae=%.3f ncc=%.4f dsc=%.4f fold=%.4f",
        fraction, report.tre_mean, report.mae, report.ncc, report.dsc, report.fold_fraction,
    )
    return report


def summarize_fractions(reports: Sequence[MetricReport]) -> MetricReport:
    """Overall row: TRE pooled over every landmark, other metrics averaged, worst Jacobian."""
    if not reports:
        raise _data_error("summarize: no fraction reports")
    pooled = [d for report in reports for d in report.tre_per_landmark]
    return MetricReport(
        fraction=OVERALL,
        tre_per_landmark=pooled,
        tre_mean=float(np.mean(pooled)) if pooled else 0.0,
        tre_std=float(np.std(pooled)) if pooled else 0.0,
        mae=float(np.mean([r.mae for r in reports])),
        ncc=float(np.mean([r.ncc for r in reports])),
        dsc=float(np.mean([r.dsc for r in reports])),
        jacobian_min=float(min(r.jacobian_min for r in reports)),
        fold_fraction=float(np.mean([r.fold_fraction for r in reports])),
    )


# ==============================
# Command entry
# ==============================

def evaluate_service(
    deformed_path: Path,
    target_path: Path,
    dvf_path: Path,
    landmarks_moving_path: Path,
    landmarks_target_path: Path,
    out_stem: Path,
    body_hu: Optional[float] = None,
    bone_hu: Optional[float] = None,
    fraction: str = "fx1",
    append: bool = False,
    difference_out: Optional[Path] = None,
    profile: Optional[Tuple[int, int]] = None,
) -> EvaluationReport:
    body_hu = settings.BODY_HU if body_hu is None else body_hu
    bone_hu = settings.BONE_HU if bone_hu is None else bone_hu
    if fraction == OVERALL:
        raise DirForgeError(exit_code=ExitCode.USAGE_ERROR, detail=f"fraction label {OVERALL!r} is reserved")

    deformed = volume_services.load_volume(deformed_path)
    target = volume_services.load_volume(target_path)
    report = evaluate_pair(
        deformed,
        target,
        volume_services.load_dvf(dvf_path),
        landmark_repository.load_landmarks(landmarks_moving_path),
        landmark_repository.load_landmarks(landmarks_target_path),
        body_hu=body_hu,
        bone_hu=bone_hu,
        fraction=fraction,
    )

    fractions = [report]
    if append and report_repository.report_paths(out_stem)[0].is_file():
        existing = report_repository.read_report(out_stem)
        if (existing.body_hu, existing.bone_hu) != (body_hu, bone_hu):
            logger.warning(
                "Appending with different thresholds | previous=(%s, %s) current=(%s, %s)",
                existing.body_hu, existing.bone_hu, body_hu, bone_hu,
            )
        fractions = [row for row in existing.fractions if row.fraction != fraction] + [report]

    evaluation = EvaluationReport(
        body_hu=body_hu,
        bone_hu=bone_hu,
        fractions=fractions,
        overall=summarize_fractions(fractions),
    )
    # checked before any write
    profile_values = difference_profile(deformed, target, *profile) if profile is not None else None

    # every output is staged; nothing lands unless all of them were written
    out_stem = Path(out_stem)
    with ExitStack() as stack:
        staging = stack.enter_context(staged_output(out_stem.parent))
        if difference_out is not None:
            difference_out = Path(difference_out)
            difference_staging = stack.enter_context(staged_output(difference_out.parent))
            volume_services.save_volume(difference_staging / difference_out.name, difference_volume(deformed, target))
        report_repository.write_report(staging / out_stem.name, evaluation)
        if profile_values is not None:
            report_repository.write_profile(profile_path(staging / out_stem.name), profile_values)
    return evaluation


def profile_path(out_stem) -> Path:
    out_stem = Path(out_stem)
    return out_stem.with_name(out_stem.with_suffix("").name + "_profile.csv")
