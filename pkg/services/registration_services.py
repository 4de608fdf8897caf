"""
Two-stage inference: global field on the pooled pair, local fields on
patches of the globally deformed image, composition, then an optional
test-time correction of the composed field.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import NamedTuple, Optional, Tuple

import numpy as np

from constants.exit_codes import ExitCode
from constants.geometry import REFINE_GRID_REDUCTION
from constants.stages import Roles, Stages
from core.exceptions import DirForgeError
from models.dvf_model import DVF, PatchGrid
from models.network_model import GeneratorParams
from models.volume_model import Volume
from nn.layers import resize
from nn.layers import warp as warp_tensor
from nn.tensor import Tensor, no_grad
from repositories import checkpoint_repository, report_repository
from schemas.config_schema import TrainConfig
from schemas.report_schema import TimingReport
from services import transform_services, volume_services
from services.loss_services import registration_loss
from services.model_services import generator_forward
from services.optimizer_services import adam_step, init_adam_state
from utils.file_utils import staged_output
from utils.logger_utils import get_logger

logger = get_logger(__name__)

REFINE_BETAS = (0.9, 0.999)


class RegistrationResult(NamedTuple):
    final_dvf: DVF
    deformed: Volume
    global_dvf: DVF
    local_dvf: DVF
    timing: TimingReport


def _check_generator(params, stage: str) -> None:
    if not isinstance(params, GeneratorParams):
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"{stage} parameters are not a generator")
    if params.stage != stage:
        raise DirForgeError(
            exit_code=ExitCode.DATA_ERROR,
            detail=f"incompatible parameters: expected stage {stage!r}, got {params.stage!r}",
        )


def _predict(moving: np.ndarray, target: np.ndarray, params: GeneratorParams) -> np.ndarray:
    with no_grad():
        out = generator_forward(Tensor(moving[None, None]), Tensor(target[None, None]), params)
    return out.data[0]


def predict_global_dvf(moving: Volume, target: Volume, params: GeneratorParams, cfg: TrainConfig) -> DVF:
    """Full-resolution global field from the pooled and padded pair."""
    volume_services.check_same_dims(moving, target, what="moving and target")
    moving_in, pooled_dims = volume_services.prepare_global_input(moving, cfg.global_downsample_target)
    target_in, _ = volume_services.prepare_global_input(target, cfg.global_downsample_target)
    coarse = transform_services.crop(_predict(moving_in, target_in, params), pooled_dims)
    return DVF(displacement=transform_services.resize_field(coarse, moving.dims), spacing=moving.spacing)


def predict_local_dvf(
    deformed: Volume,
    target: Volume,
    params: GeneratorParams,
    cfg: TrainConfig,
    worker_count: int = 1,
) -> Tuple[DVF, PatchGrid]:
    """Per-patch local fields fused over the whole image, in grid order."""
    dims = volume_services.check_same_dims(deformed, target, what="deformed and target")
    grid = transform_services.build_patch_grid(dims, cfg.patch_size, cfg.overlap)
    moving_patches = transform_services.extract_patches(deformed.voxels, grid)
    target_patches = transform_services.extract_patches(target.voxels, grid)

    def run(index: int) -> DVF:
        return DVF(displacement=_predict(moving_patches[index], target_patches[index], params), spacing=deformed.spacing)

    # no_grad is process-wide; held around the whole fan-out
    with no_grad():
        if worker_count > 1:
            with ThreadPoolExecutor(max_workers=worker_count) as pool:
                patch_dvfs = list(pool.map(run, range(len(grid))))
        else:
            patch_dvfs = [run(index) for index in range(len(grid))]

    return transform_services.fuse_patches(patch_dvfs, grid, spacing=deformed.spacing), grid


# ==============================
# Test-time correction
# ==============================

def _objective(moving: Tensor, target: Tensor, field: Tensor, cfg: TrainConfig) -> Tensor:
    return registration_loss(warp_tensor(moving, field), target, field, cfg.weights, cfg.mind)


def refine_dvf(moving: Volume, target: Volume, initial: DVF, cfg: TrainConfig) -> DVF:
    """
    Fits a coarse correction grid, trilinearly upsampled and added to the
    starting field, to the pair with Adam on the similarity and smoothness
    terms. The start is whichever of `initial` and the identity scores
    lower, and the best field seen is returned, so the objective never
    ends above either of them.
    """
    if cfg.refine_iterations == 0:
        return initial
    volume_services.check_same_dims(moving, target, what="moving and target")
    dims = initial.dims
    mov = Tensor(moving.voxels[None, None])
    tgt = Tensor(target.voxels[None, None])

    with no_grad():
        candidates = [
            (_objective(mov, tgt, Tensor(dvf.displacement[None].astype(np.float64)), cfg).item(), name, dvf)
            for name, dvf in (("network", initial), ("identity", DVF.zeros(dims, initial.spacing)))
        ]
    start_loss, start, base = min(candidates, key=lambda c: c[0])

    base_field = Tensor(base.displacement[None].astype(np.float64))
    coarse = np.zeros((1, 3) + tuple(max(2, -(-n // REFINE_GRID_REDUCTION)) for n in dims), dtype=np.float64)
    state = init_adam_state({"coarse": coarse})
    best_loss, best = start_loss, base.displacement

    for iteration in range(cfg.refine_iterations + 1):
        correction = Tensor(coarse, requires_grad=True)
        field = base_field + resize(correction, dims)
        loss = _objective(mov, tgt, field, cfg)
        if loss.item() < best_loss:
            best_loss, best = loss.item(), field.data[0].copy()
        if iteration == cfg.refine_iterations:
            break
        loss.backward()
        lr = cfg.refine_learning_rate * (1.0 - iteration / cfg.refine_iterations)
        updated, state = adam_step({"coarse": coarse}, {"coarse": correction.grad}, state, lr, REFINE_BETAS)
        coarse = updated["coarse"]

    logger.info(
        "Field refined | start=%s iterations=%d loss_start=%.6f loss_best=%.6f",
        start, cfg.refine_iterations, start_loss, best_loss,
    )
    return DVF(displacement=best, spacing=initial.spacing)


def register(
    moving: Volume,
    target: Volume,
    global_params: GeneratorParams,
    local_params: GeneratorParams,
    cfg: TrainConfig,
    worker_count: Optional[int] = None,
) -> RegistrationResult:
    """worker_count falls back to cfg.worker_count."""
    _check_generator(global_params, Stages.GLOBAL)
    _check_generator(local_params, Stages.LOCAL)
    dims = volume_services.check_same_dims(moving, target, what="moving and target")
    if worker_count is None:
        worker_count = cfg.worker_count
    if worker_count < 1:
        raise DirForgeError(exit_code=ExitCode.USAGE_ERROR, detail=f"worker_count must be >= 1, got {worker_count}")

    started = time.perf_counter()
    global_dvf = predict_global_dvf(moving, target, global_params, cfg)
    after_global = time.perf_counter()

    globally_deformed = transform_services.warp(moving, global_dvf)
    after_warp = time.perf_counter()

    local_dvf, grid = predict_local_dvf(globally_deformed, target, local_params, cfg, worker_count)
    after_local = time.perf_counter()

    composed = transform_services.compose(global_dvf, local_dvf)
    after_compose = time.perf_counter()

    final_dvf = refine_dvf(moving, target, composed, cfg)
    after_refine = time.perf_counter()

    deformed = transform_services.warp(moving, final_dvf)
    finished = time.perf_counter()

    timing = TimingReport(
        global_s=after_global - started,
        warp_s=after_warp - after_global,
        local_s=after_local - after_warp,
        compose_s=(after_compose - after_local) + (finished - after_refine),
        refine_s=after_refine - after_compose,
        total_s=finished - started,
        patch_count=len(grid),
        worker_count=worker_count,
        dims=list(dims),
    )
    logger.info(
        "Registration finished | dims=%s patches=%d workers=%d total_s=%.3f max_mm=%.3f",
        dims, len(grid), worker_count, timing.total_s, final_dvf.max_abs_mm(),
    )
    return RegistrationResult(
        final_dvf=final_dvf,
        deformed=deformed,
        global_dvf=global_dvf,
        local_dvf=local_dvf,
        timing=timing,
    )


# ==============================
# Command entry
# ==============================

def load_generators(ckpt_dir: Path) -> Tuple[GeneratorParams, GeneratorParams]:
    return tuple(
        checkpoint_repository.load_checkpoint(checkpoint_repository.checkpoint_path(ckpt_dir, stage, Roles.GENERATOR))
        for stage in (Stages.GLOBAL, Stages.LOCAL)
    )


def register_service(
    moving_path: Path,
    target_path: Path,
    ckpt_dir: Path,
    out_dir: Path,
    worker_count: Optional[int] = None,
    config_path: Optional[Path] = None,
) -> TimingReport:
    """Registers one pair with trained checkpoints and writes fields, deformed image and timing."""
    ckpt_dir = Path(ckpt_dir)
    if config_path is None and (ckpt_dir / "config.json").is_file():
        config_path = ckpt_dir / "config.json"
    cfg = report_repository.read_model(config_path, TrainConfig) if config_path else TrainConfig()

    moving = volume_services.load_volume(moving_path)
    target = volume_services.load_volume(target_path)
    global_params, local_params = load_generators(ckpt_dir)
    result = register(moving, target, global_params, local_params, cfg, worker_count)

    with staged_output(out_dir) as staging:
        volume_services.save_dvf(staging / "final_dvf", result.final_dvf)
        volume_services.save_volume(staging / "deformed", result.deformed)
        volume_services.save_dvf(staging / "global_dvf", result.global_dvf)
        volume_services.save_dvf(staging / "local_dvf", result.local_dvf)
        report_repository.write_model(staging / "timing.json", result.timing)
    return result.timing
