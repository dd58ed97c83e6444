import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mldt import ConfigurationError
from mldt.channel import (
    ChannelGain,
    FadingProfile,
    NoiseModel,
    add_awgn,
    apply_multipath,
    draw_rayleigh,
    draw_rayleigh_gain,
    draw_taps,
    quasi_static_gains,
)


def test_unit_mean_square(rng):
    h = draw_rayleigh(rng, 1.0, 10**6)
    assert 0.997 <= np.mean(np.abs(h) ** 2) <= 1.003


def test_sum_of_two_gains_is_rayleigh_with_twice_the_power(rng):
    h = draw_rayleigh(rng, 1.0, (20000, 2)).sum(axis=1)
    # |h| ~ Rayleigh with E|h|^2 = 2, i.e. scale 1
    res = stats.kstest(np.abs(h), stats.rayleigh(scale=1.0).cdf)
    assert res.pvalue > 0.01
    assert abs(np.mean(np.abs(h) ** 2) - 2.0) < 0.05


@pytest.mark.parametrize("ms", [0.0, -1.0, np.inf])
def test_degenerate_mean_square_rejected(rng, ms):
    with pytest.raises(ConfigurationError):
        draw_rayleigh(rng, ms, 4)


def test_channel_gain_roundtrip(rng):
    g = draw_rayleigh_gain(rng)
    h = complex(g)
    assert g.amplitude() == pytest.approx(abs(h))
    assert 0 <= g.phase() < 2 * np.pi
    assert np.exp(1j * g.phase()) * g.amplitude() == pytest.approx(h)


def test_noise_disabled_is_identity(rng):
    x = np.array([1 + 2j, -3, 0.5j])
    assert np.array_equal(add_awgn(x, None, rng), x)


def test_noise_variance_per_dimension(rng):
    y = add_awgn(np.zeros(10**6), NoiseModel(2.0), rng)
    assert 0.99 <= y.real.var() <= 1.01
    assert 0.99 <= y.imag.var() <= 1.01


def test_empty_frame(rng):
    assert add_awgn(np.zeros(0), NoiseModel(1.0), rng).size == 0


def test_noise_model_validation():
    assert NoiseModel.from_snr_db(10.0).n0 == pytest.approx(0.1)
    assert NoiseModel(3.0).sigma2 == 1.5
    for bad in (0.0, -1.0, np.nan):
        with pytest.raises(ConfigurationError):
            NoiseModel(bad)


def test_nonfinite_frame_rejected(rng):
    with pytest.raises(ConfigurationError):
        add_awgn(np.array([np.nan]), NoiseModel(1.0), rng)


def test_identity_channel():
    x = np.array([1.0, -1.0, -1.0, 1.0])
    assert np.array_equal(apply_multipath(x, [1 + 0j]), x)


def test_hand_convolution():
    out = apply_multipath([1, -1], [1, 1j])
    assert np.allclose(out, [1, -1 + 1j, -1j])


def test_two_path_energy(rng):
    prof = FadingProfile.equal_power(2, unit_power=2.0)
    chips = np.array([1.0, -1.0, 1.0, 1.0])
    taps = draw_taps(rng, prof, 200000)
    energy = (np.abs(apply_multipath(chips, taps)) ** 2).sum(axis=-1).mean()
    assert energy == pytest.approx(2 * np.sum(chips**2), rel=0.01)


def test_profile_validation():
    assert FadingProfile.equal_power(4).powers == (0.25,) * 4
    with pytest.raises(ConfigurationError):
        FadingProfile(2, (1.0,))
    with pytest.raises(ConfigurationError):
        FadingProfile(0)


def test_quasi_static_blocks(rng):
    h = quasi_static_gains(rng, 10, 4, users=2)
    assert h.shape == (10, 2)
    assert np.all(h[:4] == h[0]) and np.all(h[4:8] == h[4]) and np.all(h[8:] == h[8])
    assert not np.any(h[0] == h[4])


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=1, max_size=12),
    st.lists(st.complex_numbers(max_magnitude=3, allow_nan=False), min_size=1, max_size=4),
)
def test_multipath_is_linear_convolution(chips, taps):
    out = apply_multipath(np.array(chips), np.array(taps))
    assert out.shape == (len(chips) + len(taps) - 1,)
    assert np.allclose(out, np.convolve(chips, taps))
