"""
Trilinear Interpolation

Shared sampling stencil for the spatial transformer. Both the plain
numpy warp in the transform service and the differentiable warp in the
autodiff core go through TrilinearStencil, so training and inference
sample identically.

Samples outside the grid are clamped to the border. Interpolation is
evaluated as nested lerps in float64, so sampling exactly on grid
points reproduces the stored values bit for bit.
"""

from typing import Sequence, Tuple

import numpy as np


def identity_grid(dims: Sequence[int]) -> np.ndarray:
    return np.indices(tuple(dims), dtype=np.float64)


def resize_positions(source_dims: Sequence[int], target_dims: Sequence[int]) -> np.ndarray:
    """Voxel-center aligned source coordinates for every target voxel."""
    axes = [
        (np.arange(n_t, dtype=np.float64) + 0.5) * (n_s / n_t) - 0.5
        for n_s, n_t in zip(source_dims, target_dims)
    ]
    return np.stack(np.meshgrid(*axes, indexing="ij"))


class TrilinearStencil:
    def __init__(self, positions: np.ndarray, dims: Sequence[int]):
        positions = np.asarray(positions, dtype=np.float64)
        if positions.shape[0] != 3:
            raise ValueError("positions must have a leading axis of length 3")

        self.dims: Tuple[int, int, int] = tuple(int(n) for n in dims)
        self.out_shape = positions.shape[1:]
        self.lower = []
        self.upper = []
        self.frac = []
        self.inside = []

        for axis, n in enumerate(self.dims):
            p = positions[axis]
            clamped = np.clip(p, 0.0, n - 1)
            lower = np.minimum(np.floor(clamped).astype(np.intp), max(n - 2, 0))
            upper = np.minimum(lower + 1, n - 1)
            self.lower.append(lower)
            self.upper.append(upper)
            self.frac.append(clamped - lower)
            self.inside.append((p >= 0.0) & (p <= n - 1))

    def _corner_index(self, cx: int, cy: int, cz: int):
        pick = (self.lower, self.upper)
        return pick[cx][0], pick[cy][1], pick[cz][2]

    def _corners(self, values: np.ndarray):
        v = values.astype(np.float64, copy=False)
        corners = {}
        for cx in (0, 1):
            for cy in (0, 1):
                for cz in (0, 1):
                    ix, iy, iz = self._corner_index(cx, cy, cz)
                    corners[cx, cy, cz] = v[..., ix, iy, iz]
        return corners

    def sample(self, values: np.ndarray) -> np.ndarray:
        """values (..., X, Y, Z) -> float64 (..., *out_shape)."""
        c = self._corners(values)
        fx, fy, fz = self.frac

        c00 = c[0, 0, 0] * (1.0 - fx) + c[1, 0, 0] * fx
        c10 = c[0, 1, 0] * (1.0 - fx) + c[1, 1, 0] * fx
        c01 = c[0, 0, 1] * (1.0 - fx) + c[1, 0, 1] * fx
        c11 = c[0, 1, 1] * (1.0 - fx) + c[1, 1, 1] * fx

        c0 = c00 * (1.0 - fy) + c10 * fy
        c1 = c01 * (1.0 - fy) + c11 * fy

        return c0 * (1.0 - fz) + c1 * fz

    def position_gradient(self, values: np.ndarray) -> np.ndarray:
        """d sample / d position, zero where the position was clamped."""
        c = self._corners(values)
        fx, fy, fz = self.frac
        gx_, gy_, gz_ = 1.0 - fx, 1.0 - fy, 1.0 - fz

        def lerp_yz(get):
            y0 = get(0, 0) * gy_ + get(1, 0) * fy
            y1 = get(0, 1) * gy_ + get(1, 1) * fy
            return y0 * gz_ + y1 * fz

        def lerp_xz(get):
            x0 = get(0, 0) * gx_ + get(1, 0) * fx
            x1 = get(0, 1) * gx_ + get(1, 1) * fx
            return x0 * gz_ + x1 * fz

        def lerp_xy(get):
            x0 = get(0, 0) * gx_ + get(1, 0) * fx
            x1 = get(0, 1) * gx_ + get(1, 1) * fx
            return x0 * gy_ + x1 * fy

        dx = lerp_yz(lambda b, d: c[1, b, d] - c[0, b, d])
        dy = lerp_xz(lambda a, d: c[a, 1, d] - c[a, 0, d])
        dz = lerp_xy(lambda a, b: c[a, b, 1] - c[a, b, 0])

        return np.stack([
            np.where(self.inside[0], dx, 0.0),
            np.where(self.inside[1], dy, 0.0),
            np.where(self.inside[2], dz, 0.0),
        ])

    def scatter(self, upstream: np.ndarray) -> np.ndarray:
        """Adjoint of sample(): upstream (C, *out_shape) -> float64 (C, X, Y, Z)."""
        upstream = np.asarray(upstream, dtype=np.float64)
        channels = upstream.shape[0]
        size = int(np.prod(self.dims))
        result = np.zeros((channels, size), dtype=np.float64)

        fx, fy, fz = self.frac
        wx = (1.0 - fx, fx)
        wy = (1.0 - fy, fy)
        wz = (1.0 - fz, fz)

        for cx in (0, 1):
            for cy in (0, 1):
                for cz in (0, 1):
                    ix, iy, iz = self._corner_index(cx, cy, cz)
                    flat = np.ravel_multi_index((ix, iy, iz), self.dims).ravel()
                    weight = (wx[cx] * wy[cy] * wz[cz]).ravel()
                    for channel in range(channels):
                        result[channel] += np.bincount(
                            flat,
                            weights=upstream[channel].ravel() * weight,
                            minlength=size,
                        )

        return result.reshape((channels,) + self.dims)
