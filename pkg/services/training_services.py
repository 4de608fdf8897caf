"""
Two-stage adversarial training.

The global pair trains on whole volumes, mean-pooled and padded to a
generator-compatible grid. The local pair then trains on patches of the
globally deformed moving images. Every step performs one discriminator
update followed by one generator update.
"""

from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from constants.exit_codes import ExitCode
from constants.stages import Roles, Stages
from core.config import settings
from core.exceptions import DirForgeError
from models.network_model import DiscriminatorParams, GeneratorParams
from models.volume_model import Volume
from nn.layers import warp as warp_tensor
from nn.tensor import Tensor, assert_finite, no_grad
from repositories import checkpoint_repository, report_repository
from schemas.config_schema import TrainConfig
from schemas.report_schema import LossRecord
from services import transform_services, volume_services
from services.loss_services import adv_discriminator_loss, generator_loss_terms
from services.model_services import discriminator_forward, generator_forward, init_params
from services.optimizer_services import AdamState, init_adam_state, optimizer_step
from services.registration_services import predict_global_dvf
from utils.file_utils import staged_output
from utils.logger_utils import get_logger

logger = get_logger(__name__)

Pair = Tuple[Volume, Volume]

LOSS_HISTORY_FILE = "loss_history.csv"
CONFIG_FILE = "config.json"


class StageResult(NamedTuple):
    generator: GeneratorParams
    discriminator: DiscriminatorParams
    history: List[LossRecord]


class TrainingResult(NamedTuple):
    global_stage: StageResult
    local_stage: StageResult

    @property
    def history(self) -> List[LossRecord]:
        return self.global_stage.history + self.local_stage.history


class _StepTerms(NamedTuple):
    sim: float
    adv_g: float
    adv_d: float
    reg: float
    total: float


# ==============================
# One adversarial step
# ==============================

class GanTrainer:
    """Holds one stage's networks and optimizer states."""

    def __init__(self, stage: str, cfg: TrainConfig):
        self.stage = stage
        self.cfg = cfg
        self.generator = init_params(stage, cfg.seed, Roles.GENERATOR, cfg.generator_architecture())
        self.discriminator = init_params(stage, cfg.seed, Roles.DISCRIMINATOR, cfg.discriminator)
        self.g_state: AdamState = init_adam_state({n: t.data for n, t in self.generator.named()})
        self.d_state: AdamState = init_adam_state({n: t.data for n, t in self.discriminator.named()})

    def _update(self, network, state: AdamState) -> AdamState:
        return optimizer_step(network, state, self.cfg.learning_rate, self.cfg.adam_betas, self.cfg.adam_eps)

    def step(self, moving: np.ndarray, target: np.ndarray) -> _StepTerms:
        mov = Tensor(moving[None, None])
        tgt = Tensor(target[None, None])

        # discriminator update against the current generator
        with no_grad():
            deformed = warp_tensor(mov, generator_forward(mov, tgt, self.generator))
        d_loss = adv_discriminator_loss(
            discriminator_forward(deformed, self.discriminator),
            discriminator_forward(tgt, self.discriminator),
        )
        d_loss.backward()
        self.d_state = self._update(self.discriminator, self.d_state)

        # generator update through the discriminator
        dvf = generator_forward(mov, tgt, self.generator)
        deformed = warp_tensor(mov, dvf)
        terms = generator_loss_terms(
            deformed, tgt, dvf,
            discriminator_forward(deformed, self.discriminator),
            self.cfg.weights, self.cfg.mind,
        )
        terms.total.backward()
        if settings.CHECK_FINITE:
            assert_finite(self.generator.parameters(), where=f"after {self.stage} generator backward")
        self.g_state = self._update(self.generator, self.g_state)
        self.discriminator.zero_grad()

        return _StepTerms(
            sim=terms.sim.item(),
            adv_g=terms.adv.item(),
            adv_d=d_loss.item(),
            reg=terms.reg.item(),
            total=terms.total.item(),
        )

    def record(self, epoch: int, steps: Sequence[_StepTerms]) -> LossRecord:
        means = np.mean(np.array(steps, dtype=np.float64), axis=0)
        record = LossRecord(epoch=epoch, stage=self.stage, **dict(zip(_StepTerms._fields, means.tolist())))
        logger.info(
            "Epoch finished | stage=%s epoch=%d sim=%.6f adv_g=%.6f adv_d=%.6f reg=%.6f total=%.6f",
            self.stage, epoch, record.sim, record.adv_g, record.adv_d, record.reg, record.total,
        )
        return record

    def result(self, history: List[LossRecord]) -> StageResult:
        return StageResult(generator=self.generator, discriminator=self.discriminator, history=history)


def _check_pairs(pairs: Sequence[Pair], what: str) -> Tuple[int, int, int]:
    if not pairs:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"{what}: empty pair list")
    return volume_services.check_same_dims(*[v for pair in pairs for v in pair], what=f"{what} pairs")


# ==============================
# Stages
# ==============================

def train_global(pairs: Sequence[Pair], cfg: TrainConfig) -> StageResult:
    _check_pairs(pairs, "train_global")
    prepared = [
        (
            volume_services.prepare_global_input(moving, cfg.global_downsample_target)[0],
            volume_services.prepare_global_input(target, cfg.global_downsample_target)[0],
        )
        for moving, target in pairs
    ]
    logger.info("Training global stage | pairs=%d input=%s epochs=%d", len(pairs), prepared[0][0].shape, cfg.epochs_global)

    trainer = GanTrainer(Stages.GLOBAL, cfg)
    history = []
    for epoch in range(1, cfg.epochs_global + 1):
        steps = [trainer.step(moving, target) for moving, target in prepared]
        history.append(trainer.record(epoch, steps))
    return trainer.result(history)


def train_local(pairs: Sequence[Pair], cfg: TrainConfig) -> StageResult:
    dims = _check_pairs(pairs, "train_local")
    grid = transform_services.build_patch_grid(dims, cfg.patch_size, cfg.overlap)
    logger.info("Training local stage | pairs=%d patches=%d epochs=%d", len(pairs), len(grid), cfg.epochs_local)

    rng = np.random.default_rng([cfg.seed, len(Stages.ALL)])
    trainer = GanTrainer(Stages.LOCAL, cfg)
    history = []
    for epoch in range(1, cfg.epochs_local + 1):
        steps = []
        for deformed, target in pairs:
            for _ in range(cfg.local_patches_per_epoch):
                region = grid.slices(int(rng.integers(len(grid))))
                steps.append(trainer.step(deformed.voxels[region], target.voxels[region]))
        history.append(trainer.record(epoch, steps))
    return trainer.result(history)


def train(pairs: Sequence[Pair], cfg: TrainConfig) -> TrainingResult:
    """Global stage, then local stage on the globally deformed moving images."""
    global_stage = train_global(pairs, cfg)
    deformed_pairs = []
    for moving, target in pairs:
        global_dvf = predict_global_dvf(moving, target, global_stage.generator, cfg)
        deformed_pairs.append((transform_services.warp(moving, global_dvf), target))
    local_stage = train_local(deformed_pairs, cfg)
    return TrainingResult(global_stage=global_stage, local_stage=local_stage)


# ==============================
# Command entry
# ==============================

def load_train_config(config_path: Optional[Path] = None, seed: Optional[int] = None) -> TrainConfig:
    cfg = report_repository.read_model(config_path, TrainConfig) if config_path else TrainConfig()
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    return cfg


def train_service(pairs_path: Path, out_dir: Path, config_path: Optional[Path] = None, seed: Optional[int] = None) -> dict:
    """Trains both stages and writes four checkpoints, the loss history and the effective config."""
    cfg = load_train_config(config_path, seed)
    pairs = [
        (volume_services.load_volume(moving), volume_services.load_volume(target))
        for moving, target in report_repository.read_pairs(pairs_path)
    ]
    result = train(pairs, cfg)

    with staged_output(out_dir) as staging:
        checkpoints = [
            checkpoint_repository.save_checkpoint(staging, params, cfg.seed).name
            for stage in result
            for params in (stage.generator, stage.discriminator)
        ]
        report_repository.write_loss_history(staging / LOSS_HISTORY_FILE, result.history)
        report_repository.write_model(staging / CONFIG_FILE, cfg)

    logger.info("Training outputs written | out_dir=%s checkpoints=%d records=%d", out_dir, len(checkpoints), len(result.history))
    return {
        "out_dir": str(out_dir),
        "checkpoints": checkpoints,
        "loss_history": LOSS_HISTORY_FILE,
        "config": CONFIG_FILE,
        "records": len(result.history),
        "seed": cfg.seed,
    }
