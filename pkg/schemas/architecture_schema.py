from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# =========================
# Convolution
# =========================

class ConvSpec(BaseModel):
    in_channels: int = Field(..., ge=1)
    out_channels: int = Field(..., ge=1)
    kernel: Tuple[int, int, int] = (3, 3, 3)
    stride: int = Field(1, ge=1)
    padding: int = Field(0, ge=0)

    model_config = ConfigDict(frozen=True)

    @field_validator("kernel")
    @classmethod
    def kernel_must_be_odd(cls, kernel):
        if any(k < 1 or k % 2 == 0 for k in kernel):
            raise ValueError(f"kernel must be odd and positive in every axis, got {kernel}")
        return kernel

    @property
    def fan_in(self) -> int:
        kx, ky, kz = self.kernel
        return self.in_channels * kx * ky * kz


# =========================
# Generator
# =========================

class GeneratorArchitecture(BaseModel):
    """
    Encoder-only generator: four conv blocks with max pooling after the
    first three, two attention gates across the pooling boundaries and
    a 3-channel displacement head at 1/8 resolution.
    """

    in_channels: int = Field(2, ge=1)
    block_channels: Tuple[int, int, int, int] = (16, 32, 64, 64)
    block_depths: Tuple[int, int, int, int] = (2, 3, 3, 3)
    kernel: int = Field(3, ge=1)
    attention_channels: int = Field(16, ge=1)
    use_attention_gates: bool = True
    leaky_slope: float = Field(0.2, ge=0.0)
    max_disp: float = Field(10.0, gt=0.0)
    hu_scale: float = Field(1000.0, gt=0.0)

    model_config = ConfigDict(frozen=True)

    @field_validator("kernel")
    @classmethod
    def kernel_must_be_odd(cls, kernel):
        if kernel % 2 == 0:
            raise ValueError("generator kernel must be odd")
        return kernel

    @model_validator(mode="after")
    def blocks_must_be_nonempty(self):
        if any(depth < 1 for depth in self.block_depths):
            raise ValueError("every generator block needs at least one convolution")
        if any(channels < 1 for channels in self.block_channels):
            raise ValueError("generator channel counts must be positive")
        return self

    def block_specs(self) -> Tuple[Tuple[ConvSpec, ...], ...]:
        """Conv specs per block, input channels following the skip concatenations."""
        c1, c2, c3, c4 = self.block_channels
        block_inputs = (self.in_channels, c1, c2, c2 + c3)
        pad = self.kernel // 2
        blocks = []
        for c_in, c_out, depth in zip(block_inputs, self.block_channels, self.block_depths):
            specs = []
            for layer in range(depth):
                specs.append(ConvSpec(
                    in_channels=c_in if layer == 0 else c_out,
                    out_channels=c_out,
                    kernel=(self.kernel,) * 3,
                    stride=1,
                    padding=pad,
                ))
            blocks.append(tuple(specs))
        return tuple(blocks)

    def head_spec(self) -> ConvSpec:
        _, c2, c3, c4 = self.block_channels
        return ConvSpec(
            in_channels=c2 + c3 + c4,
            out_channels=3,
            kernel=(self.kernel,) * 3,
            stride=1,
            padding=self.kernel // 2,
        )

    def gate_channels(self) -> Tuple[Tuple[int, int], Tuple[int, int]]:
        """(skip channels, gating channels) for gate A and gate B."""
        _, c2, c3, c4 = self.block_channels
        return (c2, c3), (c2 + c3, c4)


# =========================
# Discriminator
# =========================

class DiscriminatorArchitecture(BaseModel):
    in_channels: int = Field(1, ge=1)
    channels: Tuple[int, ...] = (16, 32, 64, 1)
    kernel: int = Field(3, ge=1)
    leaky_slope: float = Field(0.2, ge=0.0)
    hu_scale: float = Field(1000.0, gt=0.0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def last_layer_is_single_channel(self):
        if not self.channels or self.channels[-1] != 1:
            raise ValueError("discriminator must end in a single output channel")
        if self.kernel % 2 == 0:
            raise ValueError("discriminator kernel must be odd")
        return self

    @property
    def reduction(self) -> int:
        return 2 ** len(self.channels)

    def layer_specs(self) -> Tuple[ConvSpec, ...]:
        inputs = (self.in_channels,) + tuple(self.channels[:-1])
        return tuple(
            ConvSpec(
                in_channels=c_in,
                out_channels=c_out,
                kernel=(self.kernel,) * 3,
                stride=2,
                padding=self.kernel // 2,
            )
            for c_in, c_out in zip(inputs, self.channels)
        )
