"""
Generator and discriminator assembly.

Both stages share these code paths; only parameters and input dims
differ. Inputs are HU tensors (N, 1, X, Y, Z); the networks see
HU / hu_scale.
"""

from typing import Optional, Union

import numpy as np

from constants.exit_codes import ExitCode
from constants.geometry import GENERATOR_REDUCTION
from constants.stages import Roles, Stages
from core.exceptions import DirForgeError
from models.network_model import (
    DiscriminatorParams,
    GeneratorParams,
    discriminator_shapes,
    generator_shapes,
)
from nn import functional as F
from nn.layers import attention_gate, conv3d, maxpool3d, resize
from nn.tensor import Tensor
from schemas.architecture_schema import DiscriminatorArchitecture, GeneratorArchitecture
from utils.logger_utils import get_logger

logger = get_logger(__name__)


# ==============================
# Initialization
# ==============================

def _fan_in(shape) -> int:
    return int(np.prod(shape[1:]))


def _init_tensors(shapes, rng: np.random.Generator, zero_prefixes=()) -> dict:
    tensors = {}
    for name, shape in shapes.items():
        is_bias = len(shape) == 1
        if is_bias or name.startswith(zero_prefixes):
            data = np.zeros(shape, dtype=np.float32)
        else:
            bound = np.sqrt(6.0 / _fan_in(shape))
            data = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    return tensors


def init_params(
    stage: str,
    seed: int,
    role: str = Roles.GENERATOR,
    architecture: Optional[Union[GeneratorArchitecture, DiscriminatorArchitecture]] = None,
):
    """
    He-uniform weights (variance 2 / fan_in), zero biases and a zero
    displacement head so an untrained generator predicts the identity.
    """
    if stage not in Stages.ALL:
        raise DirForgeError(exit_code=ExitCode.USAGE_ERROR, detail=f"unknown stage {stage!r}")
    if role not in Roles.ALL:
        raise DirForgeError(exit_code=ExitCode.USAGE_ERROR, detail=f"unknown role {role!r}")
    rng = np.random.default_rng([int(seed), Stages.ALL.index(stage), Roles.ALL.index(role)])

    if role == Roles.GENERATOR:
        architecture = architecture or GeneratorArchitecture()
        tensors = _init_tensors(generator_shapes(architecture), rng, zero_prefixes=("head.",))
        params = GeneratorParams(stage=stage, architecture=architecture, tensors=tensors)
    else:
        architecture = architecture or DiscriminatorArchitecture()
        tensors = _init_tensors(discriminator_shapes(architecture), rng)
        params = DiscriminatorParams(stage=stage, architecture=architecture, tensors=tensors)

    logger.debug("Initialized parameters | stage=%s role=%s seed=%d tensors=%d", stage, role, seed, len(tensors))
    return params


# ==============================
# Generator
# ==============================

def _conv_block(x: Tensor, params: GeneratorParams, block: int, specs, slope: float) -> Tensor:
    for layer, spec in enumerate(specs, start=1):
        prefix = f"block{block}.conv{layer}"
        x = F.leaky_relu(conv3d(x, params[f"{prefix}.weight"], spec, params[f"{prefix}.bias"]), slope)
    return x


def _gate(x: Tensor, g: Tensor, params: GeneratorParams, prefix: str) -> Tensor:
    if not params.architecture.use_attention_gates:
        return x
    return attention_gate(x, g, params.group(prefix))


def generator_forward(moving: Tensor, target: Tensor, params: GeneratorParams) -> Tensor:
    """(N, 1, X, Y, Z) moving and target -> (N, 3, X, Y, Z) displacement in voxels."""
    arch = params.architecture
    F.check_same_shape(moving, target, "generator_forward")
    if moving.ndim != 5 or moving.shape[1] != 1:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"generator expects (N, 1, X, Y, Z), got {moving.shape}")
    dims = moving.shape[2:]
    if any(n % GENERATOR_REDUCTION for n in dims):
        raise DirForgeError(
            exit_code=ExitCode.DATA_ERROR,
            detail=f"generator input dims {dims} must be divisible by {GENERATOR_REDUCTION}",
        )

    blocks = arch.block_specs()
    slope = arch.leaky_slope
    x = F.concat([moving, target], axis=1) * (1.0 / arch.hu_scale)

    f1 = _conv_block(x, params, 1, blocks[0], slope)
    f2 = _conv_block(maxpool3d(f1), params, 2, blocks[1], slope)
    f3 = _conv_block(maxpool3d(f2), params, 3, blocks[2], slope)

    s3 = F.concat([maxpool3d(_gate(f2, f3, params, "gate_a")), f3], axis=1)
    f4 = _conv_block(maxpool3d(s3), params, 4, blocks[3], slope)
    s4 = F.concat([maxpool3d(_gate(s3, f4, params, "gate_b")), f4], axis=1)

    head = conv3d(s4, params["head.weight"], arch.head_spec(), params["head.bias"])
    coarse = F.tanh(head) * (arch.max_disp / GENERATOR_REDUCTION)
    # displacements are rescaled with the grid: 1 coarse voxel = 8 voxels
    return resize(coarse, dims) * float(GENERATOR_REDUCTION)


# ==============================
# Discriminator
# ==============================

def discriminator_forward(image: Tensor, params: DiscriminatorParams) -> Tensor:
    """(N, 1, X, Y, Z) -> per-region realism probabilities, dims reduced 16x."""
    arch = params.architecture
    if image.ndim != 5 or image.shape[1] != arch.in_channels:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=f"discriminator expects (N, 1, X, Y, Z), got {image.shape}")
    if any(n < arch.reduction for n in image.shape[2:]):
        raise DirForgeError(
            exit_code=ExitCode.DATA_ERROR,
            detail=f"discriminator input {image.shape[2:]} too small for {len(arch.channels)} stride-2 layers",
        )

    specs = arch.layer_specs()
    x = image * (1.0 / arch.hu_scale)
    for layer, spec in enumerate(specs, start=1):
        x = conv3d(x, params[f"layer{layer}.weight"], spec, params[f"layer{layer}.bias"])
        x = F.leaky_relu(x, arch.leaky_slope) if layer < len(specs) else F.sigmoid(x)
    return x
