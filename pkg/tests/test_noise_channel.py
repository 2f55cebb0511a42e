import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpir.errors import ShapeError
from mpir.info_estimators import ksg_mutual_information
from mpir.noise_channel import (CHI_FLOOR, NoiseAmplitudes, corrupt, mi_upper_bound, mi_upper_bound_grad)


def amps_with_chi(chi, std):
    return NoiseAmplitudes(np.log(np.asarray(chi, dtype=float)), std)


def test_chi_zero_limit_is_identity(rng):
    amps = NoiseAmplitudes(np.full(2, -1e6), np.ones((2, 3)))
    x = rng.normal(size=6)
    out, _ = corrupt(x, amps, rng)
    np.testing.assert_allclose(out, x, atol=1e-5)
    assert amps.at_floor.all()


def test_forced_zero_eps_is_identity(rng):
    amps = amps_with_chi([5.0, 0.3], rng.uniform(0.5, 2, size=(2, 3)))
    x = rng.normal(size=6)
    out, eps = corrupt(x, amps, rng, eps=np.zeros(6))
    assert np.array_equal(out, x)
    assert np.all(eps == 0)


def test_unit_plug_in():
    amps = amps_with_chi([1.0, 1.0], np.ones((2, 3)))
    x = np.arange(6.0)
    out, _ = corrupt(x, amps, None, eps=np.ones(6))
    np.testing.assert_allclose(out, x + 1)


def test_corrupt_shape_error(rng):
    with pytest.raises(ShapeError):
        corrupt(np.zeros(5), amps_with_chi([1.0, 1.0], np.ones((2, 3))), rng)


def test_corrupt_returns_fresh_eps(rng):
    amps = amps_with_chi([1.0], np.ones((1, 3)))
    _, e1 = corrupt(np.zeros(3), amps, rng)
    _, e2 = corrupt(np.zeros(3), amps, rng)
    assert not np.array_equal(e1, e2)


def test_bound_plug_in_value():
    b = mi_upper_bound(amps_with_chi([1.0], np.ones((1, 3))))
    assert b.contributions[0] == pytest.approx(1.5 * math.log(2), abs=1e-12)
    assert b.contributions[0] == pytest.approx(1.0397, abs=1e-4)


def test_bound_vanishes_for_large_chi():
    b = mi_upper_bound(amps_with_chi([1e8], np.ones((1, 3))))
    assert 0 <= b.contributions[0] < 1e-15


def test_bound_cap_at_floor():
    b = mi_upper_bound(NoiseAmplitudes(np.array([-50.0, 0.0]), np.ones((2, 3))))
    assert b.capped.tolist() == [True, False]
    assert b.contributions[0] == pytest.approx(1.5 * math.log1p(CHI_FLOOR ** -2))


def test_bound_equals_per_entry_sum(rng):
    std = rng.uniform(0.1, 5, size=(4, 3))
    chi = rng.uniform(0.05, 3, size=4)
    amps = amps_with_chi(chi, std)
    direct = 0.5 * np.sum(np.log(1 + std ** 2 / amps.eta ** 2), axis=1)
    b = mi_upper_bound(amps)
    np.testing.assert_allclose(b.contributions, direct, rtol=1e-12)
    assert b.total == pytest.approx(direct.sum(), rel=1e-12)


def test_per_entry_variant(rng):
    std = np.ones((2, 3))
    log_chi = rng.normal(size=(2, 3))
    b = mi_upper_bound(NoiseAmplitudes(log_chi, std))
    np.testing.assert_allclose(b.contributions, 0.5 * np.log1p(np.exp(-2 * log_chi)).sum(axis=1))


def test_gradient_plug_in():
    g = mi_upper_bound_grad(amps_with_chi([1.0], np.ones((1, 3))))
    assert g[0] == pytest.approx(-1.5)


def test_gradient_vanishes_for_large_chi():
    assert abs(mi_upper_bound_grad(amps_with_chi([1e8], np.ones((1, 3))))[0]) < 1e-15


@pytest.mark.parametrize("per_entry", [False, True])
def test_gradient_matches_finite_differences(rng, per_entry):
    std = rng.uniform(0.5, 2, size=(5, 3))
    shape = (5, 3) if per_entry else (5,)
    for _ in range(20):
        log_chi = rng.uniform(-3, 3, size=shape)
        g = mi_upper_bound_grad(NoiseAmplitudes(log_chi, std))
        h = 1e-5
        for idx in np.ndindex(shape):
            e = np.zeros(shape)
            e[idx] = h
            fd = (mi_upper_bound(NoiseAmplitudes(log_chi + e, std)).total
                  - mi_upper_bound(NoiseAmplitudes(log_chi - e, std)).total) / (2 * h)
            assert abs(g[idx] - fd) <= 1e-6 * max(abs(fd), 1e-3)


def test_affine_rescaling_is_bit_identical(rng):
    x = rng.normal(size=(1000, 3))
    log_chi = rng.normal(size=3)
    a = mi_upper_bound(NoiseAmplitudes(log_chi, x.std(axis=0)[:, None] * np.ones((3, 3))))
    y = x.copy()
    y[:, 1] = 10 * y[:, 1] + 3
    y[:, 2] = -0.01 * y[:, 2] - 7
    b = mi_upper_bound(NoiseAmplitudes(log_chi, y.std(axis=0)[:, None] * np.ones((3, 3))))
    assert np.array_equal(a.contributions, b.contributions)


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 10), st.floats(1e-3, 5))
def test_monotone_and_non_negative(log_chi, step):
    std = np.ones((1, 3))
    lo = mi_upper_bound(NoiseAmplitudes(np.array([log_chi]), std)).contributions[0]
    hi = mi_upper_bound(NoiseAmplitudes(np.array([log_chi + step]), std)).contributions[0]
    assert lo >= 0 and hi >= 0
    assert hi < lo


def test_gaussian_channel_exactness():
    # equality case of the bound: Gaussian input, chi = 1
    vals = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(4000)
        amps = amps_with_chi([1.0], np.ones((1, 1)))
        xt, _ = corrupt(x[:, None], amps, rng)
        vals.append(ksg_mutual_information(x, xt[:, 0], k=5))
    assert abs(np.mean(vals) - 0.5 * math.log(2)) <= 0.03


def test_init_and_validation():
    amps = NoiseAmplitudes.init(np.ones((3, 2)), eta0=0.01)
    np.testing.assert_allclose(amps.chi, 0.01)
    assert NoiseAmplitudes.init(np.ones((3, 2)), per_entry=True).log_chi.shape == (3, 2)
    with pytest.raises(ShapeError):
        NoiseAmplitudes(np.zeros(2), np.ones((3, 2)))
    with pytest.raises(ShapeError):
        NoiseAmplitudes(np.zeros(3), np.zeros((3, 2)))
