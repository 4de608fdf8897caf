"""
Learnable parameter sets for the generator and discriminator.

Each set owns an ordered name -> Tensor mapping whose shapes are
derived from its architecture and checked at construction. Optimizer
updates replace tensor data in place between steps.
"""

from typing import Dict, Iterator, List, Tuple

from pydantic import BaseModel, ConfigDict, model_validator

from constants.stages import Stages
from nn.tensor import Tensor
from schemas.architecture_schema import ConvSpec, DiscriminatorArchitecture, GeneratorArchitecture


Shape = Tuple[int, ...]


def conv_shapes(prefix: str, spec: ConvSpec) -> Dict[str, Shape]:
    return {
        f"{prefix}.weight": (spec.out_channels, spec.in_channels) + tuple(spec.kernel),
        f"{prefix}.bias": (spec.out_channels,),
    }


def gate_shapes(prefix: str, skip_channels: int, gating_channels: int, inter: int) -> Dict[str, Shape]:
    return {
        f"{prefix}.wx": (inter, skip_channels, 1, 1, 1),
        f"{prefix}.bx": (inter,),
        f"{prefix}.wg": (inter, gating_channels, 1, 1, 1),
        f"{prefix}.bg": (inter,),
        f"{prefix}.psi_w": (1, inter, 1, 1, 1),
        f"{prefix}.psi_b": (1,),
    }


class NetworkParams(BaseModel):
    stage: str
    tensors: Dict[str, Tensor]

    model_config = ConfigDict(arbitrary_types_allowed=True)

    def expected_shapes(self) -> Dict[str, Shape]:
        raise NotImplementedError

    @model_validator(mode="after")
    def shapes_match_architecture(self):
        if self.stage not in Stages.ALL:
            raise ValueError(f"unknown stage {self.stage!r}")
        expected = self.expected_shapes()
        if list(expected) != list(self.tensors):
            missing = sorted(set(expected) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(expected))
            raise ValueError(f"parameter names do not match architecture | missing={missing} extra={extra}")
        for name, shape in expected.items():
            if tuple(self.tensors[name].shape) != shape:
                raise ValueError(f"{name}: shape {self.tensors[name].shape} != {shape}")
        return self

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def named(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.tensors.items())

    def parameters(self) -> List[Tensor]:
        return list(self.tensors.values())

    def zero_grad(self) -> None:
        for tensor in self.tensors.values():
            tensor.zero_grad()

    def group(self, prefix: str) -> Dict[str, Tensor]:
        """Tensors under `prefix.` keyed by their short name."""
        head = prefix + "."
        return {name[len(head):]: t for name, t in self.tensors.items() if name.startswith(head)}


class GeneratorParams(NetworkParams):
    architecture: GeneratorArchitecture

    def expected_shapes(self) -> Dict[str, Shape]:
        return generator_shapes(self.architecture)


class DiscriminatorParams(NetworkParams):
    architecture: DiscriminatorArchitecture

    def expected_shapes(self) -> Dict[str, Shape]:
        return discriminator_shapes(self.architecture)


def generator_shapes(arch: GeneratorArchitecture) -> Dict[str, Shape]:
    shapes: Dict[str, Shape] = {}
    for b, block in enumerate(arch.block_specs(), start=1):
        for layer, spec in enumerate(block, start=1):
            shapes.update(conv_shapes(f"block{b}.conv{layer}", spec))
    if arch.use_attention_gates:
        for prefix, (skip, gating) in zip(("gate_a", "gate_b"), arch.gate_channels()):
            shapes.update(gate_shapes(prefix, skip, gating, arch.attention_channels))
    shapes.update(conv_shapes("head", arch.head_spec()))
    return shapes


def discriminator_shapes(arch: DiscriminatorArchitecture) -> Dict[str, Shape]:
    shapes: Dict[str, Shape] = {}
    for layer, spec in enumerate(arch.layer_specs(), start=1):
        shapes.update(conv_shapes(f"layer{layer}", spec))
    return shapes
