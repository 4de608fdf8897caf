"""
Shared builders and finite-difference checks for the test suite.
"""

from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from models.network_model import DiscriminatorParams, GeneratorParams
from models.volume_model import Volume
from nn import functional as F
from nn.tensor import Tensor
from schemas.architecture_schema import DiscriminatorArchitecture, GeneratorArchitecture
from schemas.config_schema import TrainConfig

TINY_GENERATOR = GeneratorArchitecture(
    block_channels=(4, 4, 4, 4),
    block_depths=(1, 1, 1, 1),
    attention_channels=2,
)
TINY_DISCRIMINATOR = DiscriminatorArchitecture(channels=(4, 4, 4, 1))


def tiny_config(**overrides) -> TrainConfig:
    fields = dict(
        generator=TINY_GENERATOR,
        discriminator=TINY_DISCRIMINATOR,
        epochs_global=1,
        epochs_local=1,
        patch_size=(16, 16, 16),
        overlap=(8, 8, 8),
        global_downsample_target=16,
        refine_iterations=0,
    )
    fields.update(overrides)
    return TrainConfig(**fields)


def smooth_volume(dims, seed: int = 0, spacing=(1.0, 1.0, 1.0), amplitude: float = 200.0) -> Volume:
    """Integer-HU smooth random volume."""
    rng = np.random.default_rng(seed)
    noise = gaussian_filter(rng.standard_normal(dims), sigma=2.0, mode="nearest")
    noise = noise / noise.std()
    return Volume(voxels=np.rint(amplitude * noise), spacing=spacing)


def weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar projection of a tensor onto fixed random weights."""
    return F.sum(out * Tensor(weights))


def as_float64(params):
    tensors = {name: Tensor(t.data.astype(np.float64), requires_grad=True, name=name) for name, t in params.named()}
    cls = GeneratorParams if isinstance(params, GeneratorParams) else DiscriminatorParams
    return cls(stage=params.stage, architecture=params.architecture, tensors=tensors)


# ─────────────────────────────────────────────
# Finite differences
# ─────────────────────────────────────────────

def numeric_gradient(
    loss_of: Callable[[], float],
    array: np.ndarray,
    h: float = 1e-6,
    indices: Optional[Iterable] = None,
) -> np.ndarray:
    """Central differences of loss_of() with respect to entries of array, perturbed in place."""
    grad = np.zeros(array.shape, dtype=np.float64)
    for index in (np.ndindex(array.shape) if indices is None else indices):
        original = array[index]
        array[index] = original + h
        plus = loss_of()
        array[index] = original - h
        minus = loss_of()
        array[index] = original
        grad[index] = (plus - minus) / (2.0 * h)
    return grad


def check_gradients(build: Callable[..., Tensor], arrays: Sequence[np.ndarray], rtol=1e-3, atol=1e-7, h=1e-6) -> None:
    """Analytic gradients of build(*tensors) against central differences, every input."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    build(*leaves).backward()

    def loss_of():
        return build(*[Tensor(a) for a in arrays]).item()

    for leaf, array in zip(leaves, arrays):
        numeric = numeric_gradient(loss_of, array, h)
        np.testing.assert_allclose(leaf.grad, numeric, rtol=rtol, atol=atol)


def sample_indices(shape, count: int, rng: np.random.Generator):
    flat = rng.choice(int(np.prod(shape)), size=min(count, int(np.prod(shape))), replace=False)
    return [np.unravel_index(int(i), shape) for i in flat]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(numeric)), float(np.linalg.norm(analytic)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) / scale
