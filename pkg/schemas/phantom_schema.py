from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from constants.geometry import CLINICAL_SPACING_MM


# Bound on peak / sigma that keeps |grad u| < 1 (fold-free, invertible)
MAX_PEAK_TO_SIGMA = 0.4


# =========================
# Deformations
# =========================

class RigidShift(BaseModel):
    kind: Literal["rigid_shift"] = "rigid_shift"
    shift_mm: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @property
    def peak_to_sigma(self) -> float:
        return 0.0


class GaussianBump(BaseModel):
    kind: Literal["gaussian_bump"] = "gaussian_bump"
    # None places the bump at the liver center, snapped to the grid
    center_mm: Optional[Tuple[float, float, float]] = None
    peak_mm: Tuple[float, float, float]
    sigma_mm: float = Field(..., gt=0.0)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @property
    def peak_magnitude(self) -> float:
        return float(np.linalg.norm(self.peak_mm))

    @property
    def peak_to_sigma(self) -> float:
        return self.peak_magnitude / self.sigma_mm

    @model_validator(mode="after")
    def peak_within_fold_free_bound(self):
        if self.peak_to_sigma > MAX_PEAK_TO_SIGMA + 1e-12:
            raise ValueError(
                f"gaussian_bump peak {self.peak_magnitude:.4g} mm exceeds "
                f"{MAX_PEAK_TO_SIGMA} x sigma ({self.sigma_mm} mm)"
            )
        return self


Component = Annotated[Union[RigidShift, GaussianBump], Field(discriminator="kind")]


class Composite(BaseModel):
    kind: Literal["composite"] = "composite"
    components: List[Component] = Field(..., min_length=1)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @property
    def peak_to_sigma(self) -> float:
        return sum(component.peak_to_sigma for component in self.components)

    @model_validator(mode="after")
    def combined_bumps_stay_fold_free(self):
        if self.peak_to_sigma > MAX_PEAK_TO_SIGMA + 1e-12:
            raise ValueError(
                f"composite bumps sum to peak/sigma {self.peak_to_sigma:.4g}, "
                f"above the fold-free bound {MAX_PEAK_TO_SIGMA}"
            )
        return self


Deformation = Annotated[Union[RigidShift, GaussianBump, Composite], Field(discriminator="kind")]


# =========================
# Phantom spec
# =========================

class PhantomSpec(BaseModel):
    dims: Tuple[int, int, int] = (64, 64, 64)
    spacing: Tuple[float, float, float] = CLINICAL_SPACING_MM
    seed: int = 0
    deformation: Deformation = Field(default_factory=RigidShift)
    landmark_count: int = Field(8, ge=4)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("dims")
    @classmethod
    def dims_fit_a_phantom(cls, dims):
        if any(n < 8 for n in dims):
            raise ValueError(f"phantom dims must be at least 8 per axis, got {dims}")
        return dims

    @field_validator("spacing")
    @classmethod
    def spacing_positive(cls, spacing):
        if any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        return spacing
