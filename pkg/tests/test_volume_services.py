import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from constants.exit_codes import ExitCode
from core.exceptions import DirForgeError
from models.dvf_model import DVF
from models.volume_model import Mask, Volume
from repositories import volume_repository
from schemas.container_schema import ContainerHeader
from services import volume_services


def _volume(rng, dims=(5, 4, 3), spacing=(0.9, 0.9, 2.0)):
    return Volume(voxels=rng.uniform(-1000.0, 1000.0, size=dims), spacing=spacing)


# ==============================
# Containers
# ==============================

def test_volume_container_round_trip(tmp_path, rng):
    vol = _volume(rng)
    checksum = volume_services.save_volume(tmp_path / "vol", vol)
    loaded = volume_services.load_volume(tmp_path / "vol.json")

    np.testing.assert_array_equal(loaded.voxels, vol.voxels)
    assert loaded.spacing == vol.spacing
    assert checksum == volume_services.payload_checksum(tmp_path / "vol")
    header = json.loads((tmp_path / "vol.json").read_text())
    assert header["dims"] == [5, 4, 3]
    assert header["dtype"] == "f32"
    assert (tmp_path / "vol.bin").stat().st_size == 5 * 4 * 3 * 4


def test_payload_is_x_fastest(tmp_path):
    voxels = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    volume_services.save_volume(tmp_path / "vol", Volume(voxels=voxels, spacing=(1.0, 1.0, 1.0)))
    flat = np.frombuffer((tmp_path / "vol.bin").read_bytes(), dtype="<f4")
    assert flat[:3].tolist() == [voxels[0, 0, 0], voxels[1, 0, 0], voxels[0, 1, 0]]


def test_dvf_round_trip_is_bit_exact_in_voxels(tmp_path, rng):
    dvf = DVF(displacement=rng.uniform(-3.0, 3.0, size=(3, 4, 5, 6)), spacing=(0.9, 0.9, 2.0))
    volume_services.save_dvf(tmp_path / "dvf", dvf)
    loaded = volume_services.load_dvf(tmp_path / "dvf")
    np.testing.assert_array_equal(loaded.displacement, dvf.displacement)
    assert json.loads((tmp_path / "dvf.json").read_text())["dtype"] == "f64"


def test_mask_round_trip(tmp_path, rng):
    mask = Mask(bits=rng.random((4, 4, 4)) > 0.5, spacing=(1.0, 2.0, 3.0))
    volume_services.save_mask(tmp_path / "mask", mask)
    loaded = volume_services.load_mask(tmp_path / "mask")
    np.testing.assert_array_equal(loaded.bits, mask.bits)


def test_mask_with_fractional_values_is_rejected(tmp_path, rng):
    volume_services.save_volume(tmp_path / "mask", Volume(voxels=np.full((2, 2, 2), 0.5), spacing=(1.0, 1.0, 1.0)))
    with pytest.raises(DirForgeError) as info:
        volume_services.load_mask(tmp_path / "mask")
    assert info.value.exit_code == ExitCode.DATA_ERROR


def test_truncated_payload_is_a_data_error(tmp_path, rng):
    volume_services.save_volume(tmp_path / "vol", _volume(rng))
    payload = tmp_path / "vol.bin"
    payload.write_bytes(payload.read_bytes()[:-4])
    with pytest.raises(DirForgeError) as info:
        volume_services.load_volume(tmp_path / "vol")
    assert info.value.exit_code == ExitCode.DATA_ERROR
    assert "payload size mismatch" in info.value.detail


@pytest.mark.parametrize("field,value", [("dtype", "f16"), ("dims", [0, 4, 3]), ("spacing_mm", [1.0, -1.0, 1.0])])
def test_invalid_headers_are_data_errors(tmp_path, rng, field, value):
    volume_services.save_volume(tmp_path / "vol", _volume(rng))
    header_path = tmp_path / "vol.json"
    header = json.loads(header_path.read_text())
    header[field] = value
    header_path.write_text(json.dumps(header))
    with pytest.raises(DirForgeError) as info:
        volume_services.load_volume(tmp_path / "vol")
    assert info.value.exit_code == ExitCode.DATA_ERROR


def test_missing_container_is_a_data_error(tmp_path):
    with pytest.raises(DirForgeError) as info:
        volume_services.load_volume(tmp_path / "absent")
    assert info.value.exit_code == ExitCode.DATA_ERROR


def test_loading_a_dvf_as_a_volume_fails(tmp_path):
    volume_services.save_dvf(tmp_path / "dvf", DVF.zeros((2, 2, 2)))
    with pytest.raises(DirForgeError):
        volume_services.load_volume(tmp_path / "dvf")


def test_non_finite_voxels_are_rejected(tmp_path):
    header = ContainerHeader(dims=(2, 1, 1), spacing_mm=(1.0, 1.0, 1.0))
    volume_repository.write_container(tmp_path / "nan", np.array([np.nan, 1.0], dtype=np.float32).reshape(2, 1, 1), header)
    with pytest.raises(DirForgeError):
        volume_services.load_volume(tmp_path / "nan")


def test_describe_container_reports_channels(tmp_path, rng):
    volume_services.save_volume(tmp_path / "vol", _volume(rng))
    volume_services.save_dvf(tmp_path / "dvf", DVF.zeros((5, 4, 3), spacing=(0.9, 0.9, 2.0)))

    vol_summary = volume_services.describe_container(tmp_path / "vol")
    dvf_summary = volume_services.describe_container(tmp_path / "dvf.json")
    assert (vol_summary.channels, vol_summary.kind, vol_summary.dtype) == (1, "volume", "f32")
    assert (dvf_summary.channels, dvf_summary.kind, dvf_summary.dtype) == (3, "dvf", "f64")
    assert dvf_summary.min == dvf_summary.max == 0.0


# ==============================
# Masks
# ==============================

@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float32, (4, 4, 4), elements=st.floats(-1000, 1000, width=32)),
    st.floats(-1000, 1000),
    st.floats(0, 500),
)
def test_threshold_mask_is_monotone(voxels, low, step):
    vol = Volume(voxels=voxels, spacing=(1.0, 1.0, 1.0))
    loose = volume_services.threshold_mask(vol, low)
    strict = volume_services.threshold_mask(vol, low + step)
    assert not np.any(strict.bits & ~loose.bits)
    assert strict.population <= loose.population


def test_threshold_is_strict():
    vol = Volume(voxels=np.array([-300.0, -299.0, 0.0]).reshape(3, 1, 1), spacing=(1.0, 1.0, 1.0))
    assert volume_services.threshold_mask(vol, -300.0).bits.ravel().tolist() == [False, True, True]


def test_check_same_dims_reports_mismatch(rng):
    with pytest.raises(DirForgeError) as info:
        volume_services.check_same_dims(_volume(rng), _volume(rng, dims=(5, 4, 4)), what="pair")
    assert info.value.exit_code == ExitCode.DATA_ERROR


# ==============================
# Global-stage input
# ==============================

def test_mean_pool_averages_blocks():
    array = np.arange(64, dtype=np.float64).reshape(4, 4, 4)
    pooled = volume_services.mean_pool(array, (2, 2, 2))
    assert pooled.shape == (2, 2, 2)
    assert pooled[0, 0, 0] == pytest.approx(array[:2, :2, :2].mean())
    assert pooled[1, 1, 1] == pytest.approx(array[2:, 2:, 2:].mean())


def test_mean_pool_replicates_the_trailing_edge():
    array = np.arange(5, dtype=np.float64).reshape(5, 1, 1)
    pooled = volume_services.mean_pool(array, (2, 1, 1))
    np.testing.assert_allclose(pooled.ravel(), [0.5, 2.5, 4.0])


def test_mean_pool_factor_one_copies(rng):
    array = rng.standard_normal((3, 3, 3)).astype(np.float32)
    pooled = volume_services.mean_pool(array, (1, 1, 1))
    np.testing.assert_array_equal(pooled, array)
    assert pooled is not array


@pytest.mark.parametrize(
    "dims,pooled,padded",
    [
        ((32, 32, 32), (16, 16, 16), (16, 16, 16)),
        ((40, 24, 20), (14, 12, 10), (16, 16, 16)),
        ((64, 64, 40), (64, 64, 40), (64, 64, 40)),
        ((128, 96, 88), (64, 48, 44), (64, 48, 48)),
    ],
)
def test_prepare_global_input_dims(dims, pooled, padded):
    vol = Volume(voxels=np.zeros(dims, dtype=np.float32), spacing=(1.0, 1.0, 1.0))
    array, pooled_dims = volume_services.prepare_global_input(vol, 64 if dims[0] >= 64 else 16)
    assert pooled_dims == pooled
    assert array.shape == padded


def test_prepare_global_input_pads_by_edge_replication():
    voxels = np.zeros((12, 12, 12), dtype=np.float32)
    voxels[-1] = 5.0
    array, pooled_dims = volume_services.prepare_global_input(Volume(voxels=voxels, spacing=(1.0, 1.0, 1.0)), 16)
    assert pooled_dims == (12, 12, 12)
    np.testing.assert_array_equal(array[12:], 5.0)


# ==============================
# Slice rendering
# ==============================

def test_render_slice_writes_a_graymap(tmp_path):
    voxels = np.zeros((6, 4, 3), dtype=np.float32)
    voxels[:, :, 1] = 300.0
    volume_services.save_volume(tmp_path / "vol", Volume(voxels=voxels, spacing=(1.0, 1.0, 1.0)))
    out = volume_services.render_slice(tmp_path / "vol", 1, tmp_path / "slice.pgm")
    data = out.read_bytes()
    assert data.startswith(b"P5\n6 4\n255\n")
    assert set(data[len(b"P5\n6 4\n255\n"):]) == {255}


def test_render_fusion_writes_a_pixmap(tmp_path, rng):
    volume_services.save_volume(tmp_path / "a", _volume(rng))
    volume_services.save_volume(tmp_path / "b", _volume(rng))
    out = volume_services.render_slice(tmp_path / "a", 0, tmp_path / "fusion.ppm", fusion_path=tmp_path / "b")
    data = out.read_bytes()
    assert data.startswith(b"P6\n5 4\n255\n")
    assert len(data) == len(b"P6\n5 4\n255\n") + 5 * 4 * 3


def test_slice_outside_the_volume_is_a_usage_error(tmp_path, rng):
    volume_services.save_volume(tmp_path / "vol", _volume(rng))
    with pytest.raises(DirForgeError) as info:
        volume_services.render_slice(tmp_path / "vol", 3, tmp_path / "slice.pgm")
    assert info.value.exit_code == ExitCode.USAGE_ERROR
