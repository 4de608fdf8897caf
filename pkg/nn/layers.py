"""
Volumetric layers for the registration networks.

Tensors are laid out (batch, channel, x, y, z). conv3d loops over
kernel offsets and contracts channels with tensordot per offset, which
keeps memory at one shifted view of the input instead of a full
im2col matrix.
"""

from typing import Mapping, Sequence, Tuple

import numpy as np

from constants.exit_codes import ExitCode
from core.exceptions import DirForgeError
from nn import functional as F
from nn.tensor import Tensor
from schemas.architecture_schema import ConvSpec
from utils.interp_utils import TrilinearStencil, identity_grid, resize_positions


def _require(condition: bool, detail: str) -> None:
    if not condition:
        raise DirForgeError(exit_code=ExitCode.DATA_ERROR, detail=detail)


# ─────────────────────────────────────────────
# Convolution and pooling
# ─────────────────────────────────────────────

def conv3d(x: Tensor, weight: Tensor, spec: ConvSpec, bias: Tensor = None) -> Tensor:
    _require(x.ndim == 5, f"conv3d expects a 5-D input, got shape {x.shape}")
    _require(
        x.shape[1] == spec.in_channels,
        f"conv3d input has {x.shape[1]} channels, spec expects {spec.in_channels}",
    )
    expected = (spec.out_channels, spec.in_channels) + tuple(spec.kernel)
    _require(weight.shape == expected, f"conv3d weight shape {weight.shape} != {expected}")

    s, p = spec.stride, spec.padding
    kx, ky, kz = spec.kernel
    padded = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p), (p, p)))
    out_dims = tuple((n + 2 * p - k) // s + 1 for n, k in zip(x.shape[2:], spec.kernel))
    _require(all(n >= 1 for n in out_dims), f"conv3d input {x.shape} too small for kernel {spec.kernel}")
    ox, oy, oz = out_dims

    def window(i, j, k):
        return (
            slice(None),
            slice(None),
            slice(i, i + s * (ox - 1) + 1, s),
            slice(j, j + s * (oy - 1) + 1, s),
            slice(k, k + s * (oz - 1) + 1, s),
        )

    out = np.zeros((x.shape[0], spec.out_channels) + out_dims, dtype=x.dtype)
    for i in range(kx):
        for j in range(ky):
            for k in range(kz):
                contribution = np.tensordot(weight.data[:, :, i, j, k], padded[window(i, j, k)], axes=([1], [1]))
                out += np.moveaxis(contribution, 0, 1)
    if bias is not None:
        out += bias.data.reshape(1, -1, 1, 1, 1)

    def backward(g):
        grad_padded = np.zeros_like(padded)
        grad_weight = np.zeros_like(weight.data)
        for i in range(kx):
            for j in range(ky):
                for k in range(kz):
                    view = window(i, j, k)
                    grad_weight[:, :, i, j, k] = np.tensordot(g, padded[view], axes=([0, 2, 3, 4], [0, 2, 3, 4]))
                    back = np.tensordot(weight.data[:, :, i, j, k], g, axes=([0], [1]))
                    grad_padded[view] += np.moveaxis(back, 0, 1)
        nx, ny, nz = x.shape[2:]
        grad_x = grad_padded[:, :, p:p + nx, p:p + ny, p:p + nz]
        grads = [grad_x, grad_weight]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3, 4)).astype(bias.dtype))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward)


def maxpool3d(x: Tensor, window: Tuple[int, int, int] = (2, 2, 2)) -> Tensor:
    n, c, X, Y, Z = x.shape
    wx, wy, wz = window
    _require(
        X % wx == 0 and Y % wy == 0 and Z % wz == 0,
        f"maxpool3d: spatial dims {(X, Y, Z)} not divisible by window {window}",
    )
    blocks = (
        x.data.reshape(n, c, X // wx, wx, Y // wy, wy, Z // wz, wz)
        .transpose(0, 1, 2, 4, 6, 3, 5, 7)
        .reshape(n, c, X // wx, Y // wy, Z // wz, wx * wy * wz)
    )
    # first index in (x, y, z) scan order wins ties
    winner = np.argmax(blocks, axis=-1)
    out = np.take_along_axis(blocks, winner[..., None], axis=-1)[..., 0]

    def backward(g):
        grad_blocks = np.zeros_like(blocks)
        np.put_along_axis(grad_blocks, winner[..., None], g[..., None], axis=-1)
        grad = (
            grad_blocks.reshape(n, c, X // wx, Y // wy, Z // wz, wx, wy, wz)
            .transpose(0, 1, 2, 5, 3, 6, 4, 7)
            .reshape(x.shape)
        )
        return (grad,)

    return Tensor.from_op(out, (x,), backward)


def upsample_nearest(x: Tensor, factors: Sequence[int]) -> Tensor:
    fx, fy, fz = (int(f) for f in factors)
    out = x.data.repeat(fx, axis=2).repeat(fy, axis=3).repeat(fz, axis=4)
    n, c, X, Y, Z = x.shape

    def backward(g):
        return (g.reshape(n, c, X, fx, Y, fy, Z, fz).sum(axis=(3, 5, 7)),)

    return Tensor.from_op(out, (x,), backward)


# ─────────────────────────────────────────────
# Spatial stencils
# ─────────────────────────────────────────────

def spatial_gradient(x: Tensor, axis: int) -> Tensor:
    """Central differences inside, one-sided differences at the borders."""
    axis = axis % x.ndim
    moved = np.moveaxis(x.data, axis, 0)
    size = moved.shape[0]
    out = np.zeros_like(moved)
    if size >= 2:
        out[0] = moved[1] - moved[0]
        out[-1] = moved[-1] - moved[-2]
        if size > 2:
            out[1:-1] = 0.5 * (moved[2:] - moved[:-2])
    out = np.moveaxis(out, 0, axis)

    def backward(g):
        gm = np.moveaxis(g, axis, 0)
        grad = np.zeros_like(gm)
        if size >= 2:
            grad[1] += gm[0]
            grad[0] -= gm[0]
            grad[-1] += gm[-1]
            grad[-2] -= gm[-1]
            if size > 2:
                grad[2:] += 0.5 * gm[1:-1]
                grad[:-2] -= 0.5 * gm[1:-1]
        return (np.moveaxis(grad, 0, axis),)

    return Tensor.from_op(out, (x,), backward)


def shift_clamped(x: Tensor, offset: Sequence[int]) -> Tensor:
    """out(p) = x(clamp(p + offset)) over the three spatial axes."""
    out = x.data
    indices = []
    for axis, step in zip((2, 3, 4), offset):
        n = x.shape[axis]
        index = np.clip(np.arange(n) + int(step), 0, n - 1)
        indices.append(index)
        out = np.take(out, index, axis=axis)

    def backward(g):
        grad = g
        for axis, index in reversed(list(zip((2, 3, 4), indices))):
            moved = np.moveaxis(grad, axis, 0)
            scattered = np.zeros((x.shape[axis],) + moved.shape[1:], dtype=g.dtype)
            np.add.at(scattered, index, moved)
            grad = np.moveaxis(scattered, 0, axis)
        return (grad,)

    return Tensor.from_op(out, (x,), backward)


# ─────────────────────────────────────────────
# Spatial transformer
# ─────────────────────────────────────────────

def warp(image: Tensor, dvf: Tensor) -> Tensor:
    """
    Differentiable trilinear warp: out(p) = image(p + dvf(p)), border
    clamped. image (N, C, X, Y, Z), dvf (N, 3, X, Y, Z) in voxels.
    """
    _require(dvf.ndim == 5 and dvf.shape[1] == 3, f"warp: DVF must be (N, 3, X, Y, Z), got {dvf.shape}")
    _require(
        image.shape[0] == dvf.shape[0] and image.shape[2:] == dvf.shape[2:],
        f"warp: image {image.shape} and DVF {dvf.shape} disagree",
    )
    dims = image.shape[2:]
    grid = identity_grid(dims)
    stencils = [TrilinearStencil(grid + dvf.data[b], dims) for b in range(dvf.shape[0])]
    out = np.stack([st.sample(image.data[b]) for b, st in enumerate(stencils)]).astype(image.dtype)

    def backward(g):
        grad_image = grad_dvf = None
        if image.requires_grad:
            grad_image = np.stack([st.scatter(g[b]) for b, st in enumerate(stencils)]).astype(image.dtype)
        if dvf.requires_grad:
            grad_dvf = np.stack([
                (st.position_gradient(image.data[b]) * g[b].astype(np.float64)[None]).sum(axis=1)
                for b, st in enumerate(stencils)
            ]).astype(dvf.dtype)
        return grad_image, grad_dvf

    return Tensor.from_op(out, (image, dvf), backward)


def resize(x: Tensor, target_dims: Sequence[int]) -> Tensor:
    """Voxel-center aligned trilinear resampling of every channel."""
    target_dims = tuple(int(n) for n in target_dims)
    dims = x.shape[2:]
    stencil = TrilinearStencil(resize_positions(dims, target_dims), dims)
    out = np.stack([stencil.sample(x.data[b]) for b in range(x.shape[0])]).astype(x.dtype)

    def backward(g):
        return (np.stack([stencil.scatter(g[b]) for b in range(x.shape[0])]).astype(x.dtype),)

    return Tensor.from_op(out, (x,), backward)


# ─────────────────────────────────────────────
# Attention gate
# ─────────────────────────────────────────────

ATTENTION_KEYS = ("wx", "bx", "wg", "bg", "psi_w", "psi_b")


def attention_gate(x: Tensor, g: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """
    Additive attention gate: a = sigmoid(psi(relu(Wx x + Wg g))), out = x * a.

    g is the coarser gating map; its projection is upsampled to x's grid
    by voxel repetition. All projections are 1x1x1 convolutions.
    """
    missing = [key for key in ATTENTION_KEYS if key not in params]
    _require(not missing, f"attention_gate: missing params {missing}")
    wx, wg, psi_w = params["wx"], params["wg"], params["psi_w"]
    inter = wx.shape[0]
    _require(
        wx.shape[1] == x.shape[1] and wg.shape[1] == g.shape[1] and wg.shape[0] == inter
        and psi_w.shape[:2] == (1, inter),
        f"attention_gate: params do not match x {x.shape} / g {g.shape}",
    )
    factors = [nx // ng for nx, ng in zip(x.shape[2:], g.shape[2:])]
    _require(
        all(f >= 1 and f * ng == nx for f, nx, ng in zip(factors, x.shape[2:], g.shape[2:])),
        f"attention_gate: gating grid {g.shape[2:]} does not divide skip grid {x.shape[2:]}",
    )

    theta_x = conv3d(x, wx, ConvSpec(in_channels=x.shape[1], out_channels=inter, kernel=(1, 1, 1)), params["bx"])
    phi_g = conv3d(g, wg, ConvSpec(in_channels=g.shape[1], out_channels=inter, kernel=(1, 1, 1)), params["bg"])
    joined = F.relu(theta_x + upsample_nearest(phi_g, factors))
    psi = conv3d(joined, psi_w, ConvSpec(in_channels=inter, out_channels=1, kernel=(1, 1, 1)), params["psi_b"])
    coefficients = F.sigmoid(psi)
    return x * coefficients
