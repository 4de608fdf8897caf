"""
Training objectives on autodiff tensors.

    total = alpha * SIM + beta * ADV + gamma * REG
    SIM   = [1 - ncc(MIND(deformed), MIND(target))] + delta * gd(...)
    REG   = mu1 * rms(jacobian maps) + mu2 * rms(laplacian maps)
"""

from typing import NamedTuple

import numpy as np

from constants.exit_codes import ExitCode
from core.exceptions import DirForgeError
from nn import functional as F
from nn.layers import spatial_gradient
from nn.tensor import Tensor
from schemas.config_schema import LossWeights, MindConfig
from services.mind_services import mind_tensor

NCC_EPS = 1e-8
BCE_CLIP = 1e-7


def _spatial_axes(t: Tensor):
    return (2, 3, 4) if t.ndim == 5 else tuple(range(t.ndim))


# ==============================
# Similarity
# ==============================

def ncc(a: Tensor, b: Tensor) -> Tensor:
    """Pearson correlation per channel, averaged over channels."""
    F.check_same_shape(a, b, "ncc")
    axes = (0, 2, 3, 4) if a.ndim == 5 else None
    da = a - F.mean(a, axis=axes, keepdims=True)
    db = b - F.mean(b, axis=axes, keepdims=True)
    var_a = F.mean(da * da, axis=axes, keepdims=True)
    var_b = F.mean(db * db, axis=axes, keepdims=True)
    cov = F.mean(da * db, axis=axes, keepdims=True)
    per_channel = cov / F.maximum(F.sqrt(var_a * var_b), NCC_EPS)
    return F.mean(per_channel)


def gd(a: Tensor, b: Tensor) -> Tensor:
    """Mean over axes and voxels of squared spatial-gradient differences."""
    F.check_same_shape(a, b, "gd")
    axes = _spatial_axes(a)
    terms = [F.mean(F.square(spatial_gradient(a, axis) - spatial_gradient(b, axis))) for axis in axes]
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total / float(len(terms))


def sim_loss(deformed: Tensor, target: Tensor, delta: float, mind_config: MindConfig = None) -> Tensor:
    F.check_same_shape(deformed, target, "sim_loss")
    mind_config = mind_config or MindConfig()
    descriptor_d = mind_tensor(deformed, mind_config)
    descriptor_t = mind_tensor(target, mind_config)
    return (1.0 - ncc(descriptor_d, descriptor_t)) + delta * gd(descriptor_d, descriptor_t)


# ==============================
# Regularization
# ==============================

def _rms(t: Tensor) -> Tensor:
    return F.sqrt(F.mean(F.square(t)))


def reg_loss(dvf: Tensor, mu1: float, mu2: float) -> Tensor:
    if dvf.ndim != 5 or dvf.shape[1] != 3:
        raise DirForgeError(
            exit_code=ExitCode.DATA_ERROR,
            detail=f"reg_loss expects a 3-channel field (N, 3, X, Y, Z), got {dvf.shape}",
        )
    first = [spatial_gradient(dvf, axis) for axis in (2, 3, 4)]
    second = [spatial_gradient(g, axis) for g, axis in zip(first, (2, 3, 4))]
    laplacian = second[0] + second[1] + second[2]
    return mu1 * _rms(F.concat(first, axis=1)) + mu2 * _rms(laplacian)


# ==============================
# Adversarial
# ==============================

def _check_probabilities(t: Tensor, what: str) -> None:
    values = t.data
    if np.any(np.isnan(values)) or np.any(values < 0.0) or np.any(values > 1.0):
        raise DirForgeError(
            exit_code=ExitCode.DATA_ERROR,
            detail=f"{what}: discriminator outputs must lie in (0, 1)",
        )


def bce(prediction: Tensor, label: float) -> Tensor:
    _check_probabilities(prediction, "bce")
    p = F.clip(prediction, BCE_CLIP, 1.0 - BCE_CLIP)
    if label == 1.0:
        return -F.mean(F.log(p))
    if label == 0.0:
        return -F.mean(F.log(1.0 - p))
    return -F.mean(label * F.log(p) + (1.0 - label) * F.log(1.0 - p))


def adv_generator_loss(disc_out_on_deformed: Tensor) -> Tensor:
    return bce(disc_out_on_deformed, 1.0)


def adv_discriminator_loss(disc_out_on_deformed: Tensor, disc_out_on_target: Tensor) -> Tensor:
    return 0.5 * (bce(disc_out_on_target, 1.0) + bce(disc_out_on_deformed, 0.0))


# ==============================
# Total
# ==============================

class GeneratorLoss(NamedTuple):
    total: Tensor
    sim: Tensor
    adv: Tensor
    reg: Tensor


def generator_loss_terms(
    deformed: Tensor,
    target: Tensor,
    dvf: Tensor,
    disc_out: Tensor,
    weights: LossWeights,
    mind_config: MindConfig = None,
) -> GeneratorLoss:
    sim = sim_loss(deformed, target, weights.delta, mind_config)
    adv = adv_generator_loss(disc_out)
    reg = reg_loss(dvf, weights.mu1, weights.mu2)
    total = weights.alpha * sim + weights.beta * adv + weights.gamma * reg
    return GeneratorLoss(total=total, sim=sim, adv=adv, reg=reg)


def total_generator_loss(deformed, target, dvf, disc_out, weights: LossWeights, mind_config: MindConfig = None) -> Tensor:
    return generator_loss_terms(deformed, target, dvf, disc_out, weights, mind_config).total


def registration_loss(deformed: Tensor, target: Tensor, dvf: Tensor, weights: LossWeights, mind_config: MindConfig = None) -> Tensor:
    """alpha * SIM + gamma * REG; the generator objective without the adversarial term."""
    sim = sim_loss(deformed, target, weights.delta, mind_config)
    return weights.alpha * sim + weights.gamma * reg_loss(dvf, weights.mu1, weights.mu2)
