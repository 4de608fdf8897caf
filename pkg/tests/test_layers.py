import numpy as np
import pytest

from constants.exit_codes import ExitCode
from core.exceptions import DirForgeError
from nn.layers import (
    attention_gate,
    conv3d,
    maxpool3d,
    resize,
    shift_clamped,
    spatial_gradient,
    upsample_nearest,
    warp,
)
from nn.tensor import Tensor
from schemas.architecture_schema import ConvSpec
from tests.helpers import check_gradients, weighted_sum


def direct_conv3d(x, w, b, stride, padding):
    xp = np.pad(x, ((0, 0), (0, 0)) + ((padding, padding),) * 3)
    c_out, _, kx, ky, kz = w.shape
    dims = [(n - k) // stride + 1 for n, k in zip(xp.shape[2:], (kx, ky, kz))]
    out = np.zeros((x.shape[0], c_out, *dims))
    for n in range(x.shape[0]):
        for o in range(c_out):
            for i in range(dims[0]):
                for j in range(dims[1]):
                    for k in range(dims[2]):
                        window = xp[n, :, i * stride:i * stride + kx, j * stride:j * stride + ky, k * stride:k * stride + kz]
                        out[n, o, i, j, k] = np.sum(window * w[o]) + b[o]
    return out


# ==============================
# conv3d
# ==============================

def test_identity_kernel_passes_channels_through(rng):
    x = rng.standard_normal((1, 2, 4, 4, 4))
    weight = np.zeros((2, 2, 1, 1, 1))
    weight[0, 0] = weight[1, 1] = 1.0
    out = conv3d(Tensor(x), Tensor(weight), ConvSpec(in_channels=2, out_channels=2, kernel=(1, 1, 1)))
    np.testing.assert_array_equal(out.data, x)


def test_averaging_kernel_on_constant_input():
    x = np.full((1, 1, 5, 5, 5), 7.0)
    weight = np.full((1, 1, 3, 3, 3), 1.0 / 27.0)
    out = conv3d(Tensor(x), Tensor(weight), ConvSpec(in_channels=1, out_channels=1))
    assert out.shape == (1, 1, 3, 3, 3)
    np.testing.assert_allclose(out.data, 7.0, rtol=1e-12)


@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (1, 1)])
def test_conv3d_matches_direct_summation(stride, padding, rng):
    x = rng.standard_normal((1, 2, 5, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3, 3))
    b = rng.standard_normal(3)
    spec = ConvSpec(in_channels=2, out_channels=3, stride=stride, padding=padding)
    out = conv3d(Tensor(x), Tensor(w), spec, Tensor(b))
    np.testing.assert_allclose(out.data, direct_conv3d(x, w, b, stride, padding), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1)])
def test_conv3d_gradients(stride, padding, rng):
    x = rng.standard_normal((1, 2, 5, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3, 3))
    b = rng.standard_normal(3)
    spec = ConvSpec(in_channels=2, out_channels=3, stride=stride, padding=padding)
    out_shape = conv3d(Tensor(x), Tensor(w), spec, Tensor(b)).shape
    projection = rng.standard_normal(out_shape)
    check_gradients(lambda xi, wi, bi: weighted_sum(conv3d(xi, wi, spec, bi), projection), [x, w, b])


def test_conv3d_float32_forward_matches_oracle(rng):
    x = rng.standard_normal((1, 2, 5, 5, 5)).astype(np.float32)
    w = rng.standard_normal((3, 2, 3, 3, 3)).astype(np.float32)
    b = np.zeros(3, dtype=np.float32)
    out = conv3d(Tensor(x), Tensor(w), ConvSpec(in_channels=2, out_channels=3), Tensor(b))
    assert out.dtype == np.float32
    np.testing.assert_allclose(out.data, direct_conv3d(x.astype(np.float64), w.astype(np.float64), b, 1, 0), atol=1e-5)


def test_conv3d_is_deterministic(rng):
    x = Tensor(rng.standard_normal((1, 2, 6, 6, 6)).astype(np.float32))
    w = Tensor(rng.standard_normal((4, 2, 3, 3, 3)).astype(np.float32))
    spec = ConvSpec(in_channels=2, out_channels=4, padding=1)
    np.testing.assert_array_equal(conv3d(x, w, spec).data, conv3d(x, w, spec).data)


def test_conv3d_rejects_mismatched_weights(rng):
    x = Tensor(rng.standard_normal((1, 2, 4, 4, 4)))
    with pytest.raises(DirForgeError) as info:
        conv3d(x, Tensor(np.zeros((3, 1, 3, 3, 3))), ConvSpec(in_channels=2, out_channels=3))
    assert info.value.exit_code == ExitCode.DATA_ERROR


# ==============================
# maxpool3d
# ==============================

def test_maxpool_constant_input_routes_to_first_voxel():
    x = Tensor(np.ones((1, 1, 4, 4, 4)), requires_grad=True)
    out = maxpool3d(x)
    np.testing.assert_array_equal(out.data, np.ones((1, 1, 2, 2, 2)))
    out.sum().backward()
    expected = np.zeros((4, 4, 4))
    expected[::2, ::2, ::2] = 1.0
    np.testing.assert_array_equal(x.grad[0, 0], expected)


def test_maxpool_matches_window_scan(rng):
    x = rng.permutation(64).astype(np.float64).reshape(1, 1, 4, 4, 4)
    out = maxpool3d(Tensor(x)).data
    for i, j, k in np.ndindex(2, 2, 2):
        window = x[0, 0, 2 * i:2 * i + 2, 2 * j:2 * j + 2, 2 * k:2 * k + 2]
        assert out[0, 0, i, j, k] == window.max()


def test_maxpool_of_increasing_ramp_picks_last_corner():
    x = np.arange(64, dtype=np.float64).reshape(1, 1, 4, 4, 4)
    out = maxpool3d(Tensor(x)).data
    np.testing.assert_array_equal(out[0, 0], x[0, 0, 1::2, 1::2, 1::2])


def test_maxpool_conserves_gradient_mass(rng):
    x = Tensor(rng.standard_normal((2, 3, 4, 6, 2)), requires_grad=True)
    upstream = rng.standard_normal((2, 3, 2, 3, 1))
    weighted_sum(maxpool3d(x), upstream).backward()
    assert x.grad.sum() == pytest.approx(upstream.sum())
    assert np.count_nonzero(x.grad) == upstream.size


def test_maxpool_gradient(rng):
    x = rng.standard_normal((1, 2, 4, 4, 4))
    projection = rng.standard_normal((1, 2, 2, 2, 2))
    check_gradients(lambda a: weighted_sum(maxpool3d(a), projection), [x])


def test_maxpool_needs_divisible_dims(rng):
    with pytest.raises(DirForgeError):
        maxpool3d(Tensor(rng.standard_normal((1, 1, 5, 4, 4))))


# ==============================
# Attention gate
# ==============================

def _gate_arrays(rng, skip=3, gating=2, inter=2):
    return {
        "wx": rng.standard_normal((inter, skip, 1, 1, 1)),
        "bx": rng.standard_normal(inter),
        "wg": rng.standard_normal((inter, gating, 1, 1, 1)),
        "bg": rng.standard_normal(inter),
        "psi_w": rng.standard_normal((1, inter, 1, 1, 1)),
        "psi_b": rng.standard_normal(1),
    }


def gate_oracle(x, g, p):
    def project(w, b, t):
        return np.einsum("oc,ncxyz->noxyz", w[:, :, 0, 0, 0], t) + b.reshape(1, -1, 1, 1, 1)

    factors = [nx // ng for nx, ng in zip(x.shape[2:], g.shape[2:])]
    phi = project(p["wg"], p["bg"], g)
    for axis, factor in zip((2, 3, 4), factors):
        phi = phi.repeat(factor, axis=axis)
    joined = np.maximum(project(p["wx"], p["bx"], x) + phi, 0.0)
    psi = project(p["psi_w"], p["psi_b"], joined)
    return x / (1.0 + np.exp(-psi))


def test_gate_matches_formula(rng):
    x = rng.standard_normal((1, 3, 4, 4, 4))
    g = rng.standard_normal((1, 2, 2, 2, 2))
    params = _gate_arrays(rng)
    out = attention_gate(Tensor(x), Tensor(g), {k: Tensor(v) for k, v in params.items()})
    np.testing.assert_allclose(out.data, gate_oracle(x, g, params), rtol=1e-12, atol=1e-12)


def test_zero_psi_halves_the_skip(rng):
    x = rng.standard_normal((1, 3, 4, 4, 4))
    g = rng.standard_normal((1, 2, 2, 2, 2))
    params = _gate_arrays(rng)
    params["psi_w"][:] = 0.0
    params["psi_b"][:] = 0.0
    out = attention_gate(Tensor(x), Tensor(g), {k: Tensor(v) for k, v in params.items()})
    np.testing.assert_array_equal(out.data, 0.5 * x)


def test_large_psi_bias_opens_the_gate(rng):
    x = rng.standard_normal((1, 3, 4, 4, 4))
    g = rng.standard_normal((1, 2, 2, 2, 2))
    params = _gate_arrays(rng)
    params["psi_w"][:] = 0.0
    params["psi_b"][:] = 60.0
    out = attention_gate(Tensor(x), Tensor(g), {k: Tensor(v) for k, v in params.items()})
    np.testing.assert_allclose(out.data, x, rtol=1e-12)


def test_gate_gradients(rng):
    x = rng.standard_normal((1, 3, 4, 4, 4))
    g = rng.standard_normal((1, 2, 2, 2, 2))
    params = _gate_arrays(rng)
    keys = list(params)
    projection = rng.standard_normal(x.shape)

    def build(xi, gi, *values):
        return weighted_sum(attention_gate(xi, gi, dict(zip(keys, values))), projection)

    check_gradients(build, [x, g] + [params[k] for k in keys])


def test_gate_rejects_missing_params(rng):
    params = _gate_arrays(rng)
    del params["psi_b"]
    with pytest.raises(DirForgeError):
        attention_gate(
            Tensor(rng.standard_normal((1, 3, 4, 4, 4))),
            Tensor(rng.standard_normal((1, 2, 2, 2, 2))),
            {k: Tensor(v) for k, v in params.items()},
        )


# ==============================
# Spatial stencils
# ==============================

@pytest.mark.parametrize("axis", [2, 3, 4])
def test_spatial_gradient_gradients(axis, rng):
    x = rng.standard_normal((1, 2, 4, 5, 3))
    projection = rng.standard_normal(x.shape)
    check_gradients(lambda a: weighted_sum(spatial_gradient(a, axis), projection), [x])


def test_spatial_gradient_of_a_ramp_is_its_slope():
    ramp = np.broadcast_to(3.0 * np.arange(6.0)[:, None, None], (6, 4, 4))[None, None].copy()
    np.testing.assert_allclose(spatial_gradient(Tensor(ramp), 2).data, 3.0)
    np.testing.assert_allclose(spatial_gradient(Tensor(ramp), 3).data, 0.0)


def test_shift_clamped_gradients(rng):
    x = rng.standard_normal((1, 1, 4, 4, 4))
    projection = rng.standard_normal(x.shape)
    check_gradients(lambda a: weighted_sum(shift_clamped(a, (1, -2, 0)), projection), [x])


def test_shift_clamped_repeats_the_border():
    x = np.arange(4.0).reshape(1, 1, 4, 1, 1)
    out = shift_clamped(Tensor(x), (2, 0, 0)).data
    np.testing.assert_array_equal(out.ravel(), [2.0, 3.0, 3.0, 3.0])


def test_upsample_nearest_gradient(rng):
    x = rng.standard_normal((1, 2, 2, 3, 1))
    projection = rng.standard_normal((1, 2, 4, 3, 2))
    check_gradients(lambda a: weighted_sum(upsample_nearest(a, (2, 1, 2)), projection), [x])


# ==============================
# Warp and resize
# ==============================

def test_warp_with_zero_field_is_bit_exact(rng):
    image = rng.standard_normal((1, 1, 5, 4, 3)).astype(np.float32)
    out = warp(Tensor(image), Tensor(np.zeros((1, 3, 5, 4, 3), dtype=np.float32)))
    np.testing.assert_array_equal(out.data, image)


def test_warp_gradients(rng):
    image = rng.standard_normal((1, 1, 4, 4, 4))
    # fractional offsets keep every sample away from the stencil kinks
    dvf = rng.uniform(0.2, 0.8, size=(1, 3, 4, 4, 4)) * rng.choice([-1.0, 1.0], size=(1, 3, 4, 4, 4))
    projection = rng.standard_normal(image.shape)
    check_gradients(lambda i, u: weighted_sum(warp(i, u), projection), [image, dvf])


def test_warp_rejects_mismatched_shapes(rng):
    with pytest.raises(DirForgeError) as info:
        warp(Tensor(rng.standard_normal((1, 1, 4, 4, 4))), Tensor(np.zeros((1, 3, 4, 4, 5))))
    assert info.value.exit_code == ExitCode.DATA_ERROR


def test_resize_gradients(rng):
    x = rng.standard_normal((1, 2, 3, 3, 3))
    projection = rng.standard_normal((1, 2, 5, 4, 6))
    check_gradients(lambda a: weighted_sum(resize(a, (5, 4, 6)), projection), [x])


def test_resize_keeps_constants():
    out = resize(Tensor(np.full((1, 3, 2, 2, 2), 1.5)), (8, 8, 8))
    np.testing.assert_allclose(out.data, 1.5)
