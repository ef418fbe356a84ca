import numpy as np
import pytest

from netmimo.channel import (
    PURPOSE_CHANNEL,
    PURPOSE_ESTIMATE,
    complex_gaussian,
    draw_channel,
    draw_estimate,
    estimate_set,
    pathloss_matrix,
    trial_rng,
)
from netmimo.topology import interference_levels, pairwise_distance, place_grid


def _model(side=3, gamma=0.6, p=1e5):
    d = pairwise_distance(place_grid(side))
    return pathloss_matrix(interference_levels(d, gamma), p)


def test_pathloss_values():
    model = _model()
    assert model.sigma_sq[0, 0] == 1.0
    # unit distance at gamma 0.6, P = 1e5: variance P^(-0.4) = 1e-2
    assert model.sigma_sq[0, 1] == pytest.approx(1e-2, rel=1e-12)


def test_pathloss_two_forms_agree():
    """P^(level - 1) must equal (P^(gamma-1))^dist for every link."""
    d = pairwise_distance(place_grid(4))
    for gamma, p in ((0.6, 1e5), (0.35, 1e3), (1.0, 50.0)):
        model = pathloss_matrix(interference_levels(d, gamma), p)
        mu_sq = p ** (gamma - 1.0)
        np.testing.assert_allclose(model.sigma_sq, mu_sq**d, rtol=1e-12)


def test_pathloss_monotone_and_bounded():
    model = _model()
    assert np.all(model.sigma_sq > 0)
    assert np.all(model.sigma_sq <= 1.0)
    d = pairwise_distance(place_grid(3))
    order = np.argsort(d[0])
    assert np.all(np.diff(model.sigma_sq[0][order]) <= 1e-15)


def test_pathloss_rejects_low_snr():
    levels = interference_levels(pairwise_distance(place_grid(2)), 0.6)
    with pytest.raises(ValueError):
        pathloss_matrix(levels, 1.0)
    with pytest.raises(ValueError):
        pathloss_matrix(levels, 0.5)


def test_draw_channel_statistics():
    model = _model()
    rng = np.random.default_rng(7)
    n = 10_000
    acc_direct = 0.0
    acc_scaled = np.zeros((9, 9))
    for _ in range(n):
        chan = draw_channel(model, rng)
        acc_direct += np.abs(chan.H[0, 0]) ** 2
        acc_scaled += np.abs(chan.H) ** 2 / model.sigma_sq
    assert acc_direct / n == pytest.approx(1.0, abs=0.05)
    np.testing.assert_allclose(acc_scaled / n, 1.0, atol=0.05)


def test_draw_channel_deterministic():
    model = _model()
    a = draw_channel(model, trial_rng(42, 3, PURPOSE_CHANNEL)).H
    b = draw_channel(model, trial_rng(42, 3, PURPOSE_CHANNEL)).H
    np.testing.assert_array_equal(a, b)
    c = draw_channel(model, trial_rng(42, 4, PURPOSE_CHANNEL)).H
    assert not np.array_equal(a, c)


def test_estimate_zero_bits_error_scale():
    model = _model()
    rng = np.random.default_rng(1)
    chan = draw_channel(model, rng)
    bits = np.zeros((9, 9))
    n = 4000
    acc = np.zeros((9, 9))
    for _ in range(n):
        est = draw_estimate(chan, model, bits, rng)
        acc += np.abs(est - chan.H) ** 2
    np.testing.assert_allclose(acc / n / model.sigma_sq, 1.0, atol=0.1)


def test_estimate_infinite_bits_exact():
    model = _model()
    rng = np.random.default_rng(2)
    chan = draw_channel(model, rng)
    bits = np.full((9, 9), np.inf)
    est = draw_estimate(chan, model, bits, rng)
    np.testing.assert_array_equal(est, chan.H)
    # mixed table: only the infinite entries collapse
    bits[0, 1] = 0.0
    est2 = draw_estimate(chan, model, bits, rng)
    assert est2[0, 1] != chan.H[0, 1]
    np.testing.assert_array_equal(np.delete(est2.ravel(), 1), np.delete(chan.H.ravel(), 1))


def test_estimate_matched_bits_give_one_over_p():
    """B_ki = log2(P sigma_ki^2) leaves an error variance of 1/P."""
    p = 1e4
    model = _model(p=p)
    rng = np.random.default_rng(3)
    chan = draw_channel(model, rng)
    with np.errstate(divide="ignore"):
        bits = np.log2(p * model.sigma_sq)
    bits = np.maximum(bits, 0.0)
    keep = p * model.sigma_sq >= 1.0  # entries where the formula is meaningful
    n = 10_000
    acc = np.zeros((9, 9))
    for _ in range(n):
        est = draw_estimate(chan, model, bits, rng)
        acc += np.abs(est - chan.H) ** 2
    np.testing.assert_allclose(acc[keep] / n, 1.0 / p, rtol=0.10)


def test_estimate_negative_bits_rejected():
    model = _model()
    rng = np.random.default_rng(4)
    chan = draw_channel(model, rng)
    bits = np.zeros((9, 9))
    bits[2, 2] = -1.0
    with pytest.raises(ValueError):
        draw_estimate(chan, model, bits, rng)
    with pytest.raises(ValueError):
        draw_estimate(chan, model, np.zeros((4, 4)), rng)


def test_estimates_independent_across_tx():
    model = _model(side=2, p=1e4)
    rng = np.random.default_rng(5)
    bits = np.zeros((4, 4, 4))
    n = 10_000
    acc = 0.0
    for _ in range(n):
        chan = draw_channel(model, rng)
        est = estimate_set(chan, model, bits, rng)
        e0 = (est.per_tx[0] - chan.H)[0, 1]
        e1 = (est.per_tx[1] - chan.H)[0, 1]
        acc += (e0 * np.conj(e1)).real
    assert abs(acc / n) < 0.05


def test_error_independent_of_channel():
    model = _model(side=2, p=1e4)
    rng = np.random.default_rng(6)
    bits = np.zeros((4, 4))
    n = 10_000
    acc = 0.0
    for _ in range(n):
        chan = draw_channel(model, rng)
        est = draw_estimate(chan, model, bits, rng)
        err = (est - chan.H)[1, 0]
        acc += (chan.H_unit[1, 0] * np.conj(err)).real
    assert abs(acc / n) < 0.05


def test_complex_gaussian_unit_variance():
    rng = np.random.default_rng(8)
    z = complex_gaussian(rng, (200, 200))
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, abs=0.02)
    assert abs(np.mean(z)) < 0.01


def test_trial_rng_streams_disjoint():
    a = trial_rng(9, 0, PURPOSE_CHANNEL).standard_normal(8)
    b = trial_rng(9, 0, PURPOSE_ESTIMATE).standard_normal(8)
    c = trial_rng(9, 1, PURPOSE_CHANNEL).standard_normal(8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    np.testing.assert_array_equal(a, trial_rng(9, 0, PURPOSE_CHANNEL).standard_normal(8))
