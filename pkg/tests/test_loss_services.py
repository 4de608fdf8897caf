import numpy as np
import pytest

from constants.exit_codes import ExitCode
from core.exceptions import DirForgeError
from nn import functional as F
from nn.tensor import Tensor
from schemas.config_schema import LossWeights, MindConfig
from services import loss_services
from services.mind_services import mind_tensor
from tests.helpers import check_gradients, smooth_volume

LN2 = float(np.log(2.0))


def _image(vol) -> Tensor:
    return Tensor(vol.voxels.astype(np.float64)[None, None])


def _ramp(dims, slope) -> np.ndarray:
    x = np.arange(dims[0], dtype=np.float64)[:, None, None]
    return np.broadcast_to(slope * x, dims)[None, None].copy()


# ==============================
# NCC
# ==============================

def test_ncc_of_identical_and_negated_inputs(rng):
    a = rng.standard_normal((1, 2, 4, 5, 3))
    assert loss_services.ncc(Tensor(a), Tensor(a)).item() == pytest.approx(1.0, abs=1e-12)
    assert loss_services.ncc(Tensor(a), Tensor(-a)).item() == pytest.approx(-1.0, abs=1e-12)


def test_ncc_is_affine_invariant(rng):
    a = rng.standard_normal((1, 1, 5, 5, 5))
    b = rng.standard_normal((1, 1, 5, 5, 5))
    base = loss_services.ncc(Tensor(a), Tensor(b)).item()
    assert loss_services.ncc(Tensor(3.0 * a + 7.0), Tensor(b)).item() == pytest.approx(base, abs=1e-12)


def test_ncc_averages_per_channel_correlations(rng):
    a = rng.standard_normal((1, 3, 4, 4, 4))
    b = a + rng.standard_normal((1, 3, 4, 4, 4))
    expected = np.mean([np.corrcoef(a[0, c].ravel(), b[0, c].ravel())[0, 1] for c in range(3)])
    assert loss_services.ncc(Tensor(a), Tensor(b)).item() == pytest.approx(expected, abs=1e-12)


def test_ncc_rejects_mismatched_shapes():
    with pytest.raises(DirForgeError) as info:
        loss_services.ncc(Tensor(np.ones((1, 1, 4, 4, 4))), Tensor(np.ones((1, 1, 4, 4, 5))))
    assert info.value.exit_code == ExitCode.DATA_ERROR


def test_ncc_gradient(rng):
    a = rng.standard_normal((1, 2, 3, 3, 3))
    b = rng.standard_normal((1, 2, 3, 3, 3))
    check_gradients(lambda x, y: loss_services.ncc(x, y), [a, b])


# ==============================
# Gradient difference
# ==============================

def test_gd_of_identical_inputs_is_zero(rng):
    a = rng.standard_normal((1, 2, 4, 4, 4))
    assert loss_services.gd(Tensor(a), Tensor(a)).item() == 0.0


def test_gd_of_two_ramps():
    dims = (6, 5, 4)
    value = loss_services.gd(Tensor(_ramp(dims, 1.0)), Tensor(_ramp(dims, 3.0))).item()
    assert value == pytest.approx(4.0 / 3.0, abs=1e-12)


def test_gd_gradient(rng):
    a = rng.standard_normal((1, 1, 4, 3, 3))
    b = rng.standard_normal((1, 1, 4, 3, 3))
    check_gradients(lambda x, y: loss_services.gd(x, y), [a, b])


# ==============================
# Similarity
# ==============================

def test_similarity_of_an_image_with_itself_is_zero():
    image = _image(smooth_volume((10, 10, 8), seed=1))
    assert loss_services.sim_loss(image, image, delta=5.0).item() == pytest.approx(0.0, abs=1e-6)


def test_similarity_ignores_a_shared_intensity_offset():
    a = smooth_volume((10, 9, 8), seed=1)
    b = smooth_volume((10, 9, 8), seed=2)
    base = loss_services.sim_loss(_image(a), _image(b), delta=5.0).item()
    shifted = loss_services.sim_loss(Tensor(_image(a).data + 100.0), Tensor(_image(b).data + 100.0), delta=5.0).item()
    assert base > 0.0
    assert shifted == pytest.approx(base, abs=1e-9)


def test_similarity_is_descriptor_ncc_plus_weighted_gd():
    a = _image(smooth_volume((8, 8, 8), seed=3))
    b = _image(smooth_volume((8, 8, 8), seed=4))
    config = MindConfig()
    descriptor_a, descriptor_b = mind_tensor(a, config), mind_tensor(b, config)
    expected = (1.0 - loss_services.ncc(descriptor_a, descriptor_b).item()) + 2.5 * loss_services.gd(descriptor_a, descriptor_b).item()
    assert loss_services.sim_loss(a, b, delta=2.5, mind_config=config).item() == pytest.approx(expected, abs=1e-12)


def test_similarity_gradient(rng):
    a = rng.standard_normal((1, 1, 4, 4, 3))
    b = rng.standard_normal((1, 1, 4, 4, 3))
    check_gradients(lambda x: loss_services.sim_loss(x, Tensor(b), delta=5.0), [a])


# ==============================
# Regularization
# ==============================

def test_constant_field_costs_nothing():
    dvf = np.zeros((1, 3, 5, 5, 5))
    dvf[:, 0] = 2.5
    assert loss_services.reg_loss(Tensor(dvf), 1.0, 0.5).item() == 0.0


def test_linear_field_has_only_first_derivative_cost():
    dvf = np.zeros((1, 3, 6, 5, 4))
    dvf[:, 0] = np.arange(6, dtype=np.float64)[:, None, None]
    # one of nine derivative maps is all ones
    assert loss_services.reg_loss(Tensor(dvf), 1.0, 0.0).item() == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert loss_services.reg_loss(Tensor(dvf), 0.0, 1.0).item() == pytest.approx(0.0, abs=1e-12)


def test_regularization_is_positively_homogeneous(rng):
    dvf = rng.standard_normal((1, 3, 4, 4, 4))
    base = loss_services.reg_loss(Tensor(dvf), 1.0, 0.5).item()
    assert loss_services.reg_loss(Tensor(2.5 * dvf), 1.0, 0.5).item() == pytest.approx(2.5 * base, rel=1e-12)


def test_regularization_gradient(rng):
    dvf = rng.standard_normal((1, 3, 4, 3, 3))
    check_gradients(lambda u: loss_services.reg_loss(u, 1.0, 0.5), [dvf])


def test_regularization_needs_three_channels():
    with pytest.raises(DirForgeError):
        loss_services.reg_loss(Tensor(np.zeros((1, 2, 4, 4, 4))), 1.0, 0.5)


# ==============================
# Adversarial
# ==============================

def test_bce_at_one_half_is_ln2():
    half = Tensor(np.full((1, 1, 2, 2, 2), 0.5))
    assert loss_services.bce(half, 1.0).item() == pytest.approx(LN2)
    assert loss_services.bce(half, 0.0).item() == pytest.approx(LN2)
    assert loss_services.adv_discriminator_loss(half, half).item() == pytest.approx(LN2)


def test_bce_is_clipped_at_the_extremes():
    assert loss_services.bce(Tensor(np.ones(4)), 1.0).item() == pytest.approx(0.0, abs=1e-6)
    assert loss_services.bce(Tensor(np.zeros(4)), 1.0).item() == pytest.approx(-np.log(1e-7), rel=1e-6)


@pytest.mark.parametrize("label", [0.0, 0.3, 1.0])
def test_bce_matches_formula(rng, label):
    p = rng.uniform(0.05, 0.95, size=(2, 1, 2, 2, 2))
    expected = -np.mean(label * np.log(p) + (1.0 - label) * np.log(1.0 - p))
    assert loss_services.bce(Tensor(p), label).item() == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("value", [1.5, -0.1, np.nan])
def test_bce_rejects_non_probabilities(value):
    with pytest.raises(DirForgeError) as info:
        loss_services.bce(Tensor(np.array([0.5, value])), 1.0)
    assert info.value.exit_code == ExitCode.DATA_ERROR


def test_bce_gradient(rng):
    p = rng.uniform(0.1, 0.9, size=(1, 1, 2, 2, 2))
    check_gradients(lambda x: loss_services.bce(x, 0.3), [p])


def test_adversarial_objectives_pull_in_opposite_directions(rng):
    p = Tensor(rng.uniform(0.2, 0.8, size=(1, 1, 2, 2, 2)), requires_grad=True)
    loss_services.adv_generator_loss(p).backward()
    generator_grad = p.grad.copy()
    p.zero_grad()
    loss_services.adv_discriminator_loss(p, Tensor(np.full((1, 1, 2, 2, 2), 0.5))).backward()
    assert np.all(generator_grad < 0.0)
    assert np.all(p.grad > 0.0)


# ==============================
# Total
# ==============================

def test_total_for_a_perfect_zero_field_is_the_adversarial_term():
    image = _image(smooth_volume((8, 8, 8), seed=9))
    weights = LossWeights()
    terms = loss_services.generator_loss_terms(
        image, image, Tensor(np.zeros((1, 3, 8, 8, 8))), Tensor(np.full((1, 1, 1, 1, 1), 0.5)), weights,
    )
    assert terms.reg.item() == 0.0
    assert terms.adv.item() == pytest.approx(LN2)
    assert terms.total.item() == pytest.approx(weights.beta * LN2 + weights.alpha * terms.sim.item(), abs=1e-9)
    assert terms.sim.item() == pytest.approx(0.0, abs=1e-6)


def test_total_is_the_weighted_sum_of_its_terms(rng):
    deformed = _image(smooth_volume((8, 8, 8), seed=10))
    target = _image(smooth_volume((8, 8, 8), seed=11))
    dvf = Tensor(rng.standard_normal((1, 3, 8, 8, 8)))
    disc_out = Tensor(rng.uniform(0.2, 0.8, size=(1, 1, 1, 1, 1)))
    weights = LossWeights(alpha=3.0, beta=2.0, gamma=0.5, delta=1.5, mu1=0.7, mu2=0.2)

    terms = loss_services.generator_loss_terms(deformed, target, dvf, disc_out, weights)
    expected = 3.0 * terms.sim.item() + 2.0 * terms.adv.item() + 0.5 * terms.reg.item()
    assert terms.total.item() == pytest.approx(expected, rel=1e-12)
    assert terms.reg.item() == pytest.approx(loss_services.reg_loss(dvf, 0.7, 0.2).item())
    assert loss_services.total_generator_loss(deformed, target, dvf, disc_out, weights).item() == pytest.approx(terms.total.item())


def test_total_gradient_reaches_every_input(rng):
    deformed = rng.standard_normal((1, 1, 4, 4, 4))
    target = Tensor(rng.standard_normal((1, 1, 4, 4, 4)))
    dvf = rng.standard_normal((1, 3, 4, 4, 4))
    disc_out = rng.uniform(0.2, 0.8, size=(1, 1, 1, 1, 1))
    weights = LossWeights(alpha=1.0, beta=1.0, gamma=1.0, delta=1.0)
    check_gradients(
        lambda d, u, p: loss_services.total_generator_loss(d, target, u, p, weights),
        [deformed, dvf, disc_out],
    )


def test_registration_loss_is_the_total_without_the_adversarial_term(rng):
    deformed = _image(smooth_volume((8, 8, 8), seed=12))
    target = _image(smooth_volume((8, 8, 8), seed=13))
    dvf = Tensor(rng.standard_normal((1, 3, 8, 8, 8)))
    disc_out = Tensor(rng.uniform(0.2, 0.8, size=(1, 1, 1, 1, 1)))
    weights = LossWeights(alpha=3.0, beta=2.0, gamma=0.5, delta=1.5, mu1=0.7, mu2=0.2)

    terms = loss_services.generator_loss_terms(deformed, target, dvf, disc_out, weights)
    loss = loss_services.registration_loss(deformed, target, dvf, weights)
    assert loss.item() == pytest.approx(terms.total.item() - 2.0 * terms.adv.item(), rel=1e-12)
