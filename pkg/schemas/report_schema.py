from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field


# =========================
# Evaluation
# =========================

REPORT_COLUMNS = ("fraction", "tre_mean", "tre_std", "mae", "ncc", "dsc", "jac_min", "fold_frac")


class MetricReport(BaseModel):
    fraction: str = "fx1"
    tre_per_landmark: List[float] = Field(default_factory=list)
    tre_mean: float = Field(..., ge=0.0)
    tre_std: float = Field(..., ge=0.0)
    mae: float = Field(..., ge=0.0)
    ncc: float = Field(..., ge=-1.0, le=1.0)
    dsc: float = Field(..., ge=0.0, le=1.0)
    jacobian_min: float
    fold_fraction: float = Field(..., ge=0.0, le=1.0)

    def row(self) -> dict:
        return {
            "fraction": self.fraction,
            "tre_mean": self.tre_mean,
            "tre_std": self.tre_std,
            "mae": self.mae,
            "ncc": self.ncc,
            "dsc": self.dsc,
            "jac_min": self.jacobian_min,
            "fold_frac": self.fold_fraction,
        }


class EvaluationReport(BaseModel):
    """Per-fraction rows plus the pooled overall row."""

    body_hu: float
    bone_hu: float
    fractions: List[MetricReport]
    overall: MetricReport


# =========================
# Training
# =========================

LOSS_COLUMNS = ("epoch", "stage", "sim", "adv_g", "adv_d", "reg", "total")


class LossRecord(BaseModel):
    epoch: int = Field(..., ge=1)
    stage: str
    sim: float
    adv_g: float
    adv_d: float
    reg: float
    total: float

    model_config = ConfigDict(frozen=True)


# =========================
# Registration
# =========================

class TimingReport(BaseModel):
    global_s: float = Field(..., ge=0.0)
    warp_s: float = Field(..., ge=0.0)
    local_s: float = Field(..., ge=0.0)
    compose_s: float = Field(..., ge=0.0)
    refine_s: float = Field(0.0, ge=0.0)
    total_s: float = Field(..., ge=0.0)
    patch_count: int = Field(..., ge=1)
    worker_count: int = Field(1, ge=1)
    dims: Optional[List[int]] = None
