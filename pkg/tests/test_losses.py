import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from morphlab.errors import ConfigError, ShapeError
from morphlab.features import init_pyramid_params
from morphlab.losses import (TERMS, FaceLoss, LossWeights, biometric_loss, mse_loss,
                             perceptual_loss, total_loss, wing_loss)
from morphlab.tensor import grad_check

TOL = 1e-4


def wing(x, beta=10.0, eps=2.0):
    x = abs(x)
    if x < beta:
        return beta * math.log1p(x / eps)
    return x - (beta - beta * math.log1p(beta / eps))


def face(seed, size=16):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.stack([0.5 * np.sin(rng.uniform(1, 4) * xx + rng.uniform(0, 3))
                    * np.cos(rng.uniform(1, 4) * yy) for _ in range(3)])
    return img + 0.05 * rng.standard_normal(img.shape)


# ---------------------------------------------------------------- wing

def test_wing_closed_form_values():
    assert float(wing_loss(np.array([[1.0]]), np.zeros((1, 1))).data) == pytest.approx(
        10 * math.log(1.5), abs=1e-12)
    assert 10 * math.log(1.5) == pytest.approx(4.05465, abs=1e-5)
    at_beta = float(wing_loss(np.array([[10.0]]), np.zeros((1, 1))).data)
    assert at_beta == pytest.approx(10 * math.log(6), abs=1e-12)
    assert at_beta == pytest.approx(17.9176, abs=1e-4)


def test_wing_branches_meet_at_beta():
    for beta, eps in ((10.0, 2.0), (3.0, 0.5), (1.0, 1.0)):
        lo = float(wing_loss(np.array([[beta - 1e-12]]), np.zeros((1, 1)), beta, eps).data)
        hi = float(wing_loss(np.array([[beta + 1e-12]]), np.zeros((1, 1)), beta, eps).data)
        assert abs(lo - hi) < 1e-9
        assert lo == pytest.approx(beta * math.log1p(beta / eps), abs=1e-9)


def test_wing_is_mean_over_coordinates(rng):
    pred, target = rng.normal(0, 8, (2, 5, 2))
    expected = np.mean([wing(r) for r in (pred - target).ravel()])
    assert float(wing_loss(pred, target).data) == pytest.approx(expected, rel=1e-12)
    assert float(wing_loss(pred, pred).data) == 0.0


@given(st.floats(0, 50), st.floats(0, 50))
def test_wing_monotone_in_residual(a, b):
    lo, hi = sorted((a, b))
    f = lambda x: float(wing_loss(np.array([[x]]), np.zeros((1, 1))).data)  # noqa: E731
    assert f(lo) <= f(hi)


def test_wing_rejects_bad_arguments():
    with pytest.raises(ShapeError):
        wing_loss(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ConfigError):
        wing_loss(np.zeros((1, 2)), np.zeros((1, 2)), beta=0)
    with pytest.raises(ConfigError):
        LossWeights(wing_epsilon=-1)


# ---------------------------------------------------------------- biometric / perceptual / mse

def test_biometric_degenerate_and_identical():
    assert float(biometric_loss(np.full((3, 16, 16), 0.2), np.full((3, 16, 16), -0.7)).data) == 0
    img = face(0)
    assert float(biometric_loss(img, img).data) == pytest.approx(0.0, abs=1e-14)
    d = float(biometric_loss(img, face(1)).data)
    assert 0 < d <= 1


def test_biometric_gradient():
    target = face(2)
    assert grad_check(lambda t: biometric_loss(t, target), face(3),
                      indices=range(0, 768, 13)) < TOL


def test_perceptual_zero_weights_and_linearity():
    params = init_pyramid_params(1)
    a, b = face(4), face(5)
    assert float(perceptual_loss(a, b, params, (0, 0, 0, 0)).data) == 0.0
    assert float(perceptual_loss(a, a, params).data) == 0.0
    lam = (0.3, 1.0, 2.0, 0.5)
    one = float(perceptual_loss(a, b, params, lam).data)
    two = float(perceptual_loss(a, b, params, tuple(2 * v for v in lam)).data)
    assert one > 0 and two == pytest.approx(2 * one, rel=1e-12)


def test_mse_examples():
    a = np.zeros((2, 2, 3))
    b = a.copy()
    b[1, 0, 2] = 0.6
    assert float(mse_loss(a, b).data) == pytest.approx(0.03, abs=1e-15)
    assert float(mse_loss(np.zeros((3, 4, 4)), np.ones((3, 4, 4))).data) == 1.0
    assert float(mse_loss(b, b).data) == 0.0
    with pytest.raises(ShapeError):
        mse_loss(a, np.zeros((2, 3, 2)))


# ---------------------------------------------------------------- total

def test_weighted_sum_by_hand():
    w = LossWeights()
    assert w.alphas == (0.02, 1.0, 1.0, 1.0)
    assert w.combine((4.05465, 0.2, 0.1, 0.03)) == pytest.approx(0.4110930, abs=1e-12)


def test_identical_images_give_zero(face_loss):
    img = face(6)
    total, parts = total_loss(img, img, face_loss)
    assert float(total.data) == pytest.approx(0.0, abs=1e-12)
    assert set(parts) == set(TERMS)
    assert all(v == pytest.approx(0.0, abs=1e-12) for v in parts.values())


def test_total_matches_component_combination(face_loss):
    a, b = face(7), face(8)
    total, parts = total_loss(a, b, face_loss)
    assert all(v > 0 for v in parts.values())
    assert float(total.data) == pytest.approx(face_loss.weights.combine(parts), rel=1e-12)


def test_mse_only_weights_reduce_to_mse():
    a, b = face(9), face(10)
    loss = FaceLoss(LossWeights(0, 0, 0, 1))
    total, parts = total_loss(a, b, loss)
    assert float(total.data) == float(mse_loss(a, b).data)
    assert parts["wing"] == parts["biom"] == parts["percept"] == 0.0


@pytest.mark.parametrize("index", range(4))
def test_total_is_linear_in_each_alpha(index):
    a, b = face(11), face(12)
    values = []
    for alpha in (0.5, 1.5, 2.5):
        alphas = [1.0, 1.0, 1.0, 1.0]
        alphas[index] = alpha
        values.append(float(total_loss(a, b, FaceLoss(LossWeights(*alphas)))[0].data))
    assert values[2] - values[1] == pytest.approx(values[1] - values[0], rel=1e-10)


@given(st.integers(0, 10_000))
def test_every_term_nonnegative(seed):
    loss = FaceLoss(LossWeights(1, 1, 1, 1))
    rng = np.random.default_rng(seed)
    _, parts = total_loss(rng.uniform(-1, 1, (3, 16, 16)), rng.uniform(-1, 1, (3, 16, 16)), loss)
    assert all(v >= 0 for v in parts.values())


def test_full_loss_gradient(face_loss):
    prepared = face_loss.prepare(face(13))
    assert grad_check(lambda t: face_loss(t, prepared)[0], face(14),
                      indices=range(0, 768, 19)) < TOL


def test_invalid_weights_rejected():
    with pytest.raises(ConfigError):
        LossWeights(0, 0, 0, 0)
    with pytest.raises(ConfigError):
        LossWeights(alpha2=-1)
    with pytest.raises(ConfigError):
        LossWeights(lambdas=(1, 1))
