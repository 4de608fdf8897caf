from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from constants.geometry import DEFAULT_OVERLAP, DEFAULT_PATCH_SIZE, SIX_NEIGHBORHOOD
from core.config import settings
from schemas.architecture_schema import DiscriminatorArchitecture, GeneratorArchitecture


# =========================
# Loss weights
# =========================

class LossWeights(BaseModel):
    alpha: float = Field(200.0, ge=0.0, description="similarity weight")
    beta: float = Field(1.0, ge=0.0, description="adversarial weight")
    gamma: float = Field(10.0, ge=0.0, description="regularization weight")
    delta: float = Field(5.0, ge=0.0, description="gradient-difference weight inside the similarity")
    mu1: float = Field(1.0, ge=0.0, description="first-derivative weight")
    mu2: float = Field(0.5, ge=0.0, description="second-derivative weight")

    model_config = ConfigDict(frozen=True, extra="forbid")


# =========================
# MIND
# =========================

class MindConfig(BaseModel):
    patch_radius: int = Field(1, ge=1)
    neighborhood: Tuple[Tuple[int, int, int], ...] = SIX_NEIGHBORHOOD

    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("neighborhood")
    @classmethod
    def neighborhood_must_be_nonempty(cls, neighborhood):
        if not neighborhood:
            raise ValueError("MIND neighborhood must contain at least one offset")
        if any(offset == (0, 0, 0) for offset in neighborhood):
            raise ValueError("MIND neighborhood offsets must be nonzero")
        return neighborhood


# =========================
# Training run
# =========================

class TrainConfig(BaseModel):
    weights: LossWeights = Field(default_factory=LossWeights)
    mind: MindConfig = Field(default_factory=MindConfig)
    generator: GeneratorArchitecture = Field(default_factory=GeneratorArchitecture)
    discriminator: DiscriminatorArchitecture = Field(default_factory=DiscriminatorArchitecture)

    learning_rate: float = Field(2e-4, gt=0.0)
    adam_betas: Tuple[float, float] = (0.5, 0.999)
    adam_eps: float = Field(1e-8, gt=0.0)

    epochs_global: int = Field(20, ge=0)
    epochs_local: int = Field(20, ge=0)
    local_patches_per_epoch: int = Field(1, ge=1)

    patch_size: Tuple[int, int, int] = DEFAULT_PATCH_SIZE
    overlap: Tuple[int, int, int] = DEFAULT_OVERLAP
    global_downsample_target: int = Field(64, ge=16)
    max_disp: float = Field(10.0, gt=0.0)

    refine_iterations: int = Field(30, ge=0, description="test-time field correction steps in register; 0 keeps the network field")
    refine_learning_rate: float = Field(0.25, gt=0.0, description="initial correction step, in voxels")

    seed: int = 0
    worker_count: int = Field(default_factory=lambda: settings.WORKERS, ge=1, description="patch inference threads in register")

    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("adam_betas")
    @classmethod
    def betas_in_unit_interval(cls, betas):
        if not all(0.0 <= b < 1.0 for b in betas):
            raise ValueError(f"adam betas must lie in [0, 1), got {betas}")
        return betas

    @model_validator(mode="after")
    def patch_geometry_is_consistent(self):
        if any(p <= o for p, o in zip(self.patch_size, self.overlap)):
            raise ValueError(f"patch_size {self.patch_size} must exceed overlap {self.overlap} elementwise")
        if any(o < 0 for o in self.overlap):
            raise ValueError("overlap must be non-negative")
        if any(p % 8 or p < 16 for p in self.patch_size):
            raise ValueError(f"patch_size {self.patch_size} must be a multiple of 8 and at least 16")
        return self

    @property
    def stride(self) -> Tuple[int, int, int]:
        return tuple(p - o for p, o in zip(self.patch_size, self.overlap))

    def generator_architecture(self) -> GeneratorArchitecture:
        return self.generator.model_copy(update={"max_disp": self.max_disp})
