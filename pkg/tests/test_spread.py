import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mldt import ConfigurationError
from mldt.channel import NoiseModel, add_awgn
from mldt.detector import mldt_llrs, superposition_levels
from mldt.spread import (
    SignatureSet,
    cdma_detect,
    cdma_transmit,
    combine_llrs,
    combining_weights,
    correlate,
    correlator_bank,
    gen_hadamard,
    gen_msequence,
    msequence_bits,
)


def test_hadamard_base_case():
    s = gen_hadamard(2).sequences
    assert s.tolist() == [[1, 1], [1, -1]]


@pytest.mark.parametrize("J", [2, 4, 8, 16, 32, 64])
def test_hadamard_orthogonal(J):
    s = gen_hadamard(J).sequences
    assert np.array_equal(s @ s.T, J * np.eye(J, dtype=int))


@pytest.mark.parametrize("J", [1, 12, 128])
def test_hadamard_bad_length(J):
    with pytest.raises(ConfigurationError):
        gen_hadamard(J)


@pytest.mark.parametrize("m", [3, 4, 5, 6])
def test_msequence_autocorrelation(m):
    sig = gen_msequence(m)
    J = 2**m - 1
    assert sig.J == sig.K == J
    base = sig.sequences[0]
    for shift in range(J):
        acf = int(base @ np.roll(base, shift))
        assert acf == (J if shift == 0 else -1)
    # balance: one more 1-bit than 0-bits
    assert msequence_bits(m).sum() == 2 ** (m - 1)


def test_msequence_unsupported():
    with pytest.raises(ConfigurationError):
        gen_msequence(9)


def test_csv_roundtrip(tmp_path):
    sig = gen_msequence(4)
    sig.to_csv(tmp_path / "s.csv")
    back = SignatureSet.from_csv(tmp_path / "s.csv")
    assert np.array_equal(back.sequences, sig.sequences)
    (tmp_path / "bad.csv").write_text("1,0\n")
    with pytest.raises(ConfigurationError):
        SignatureSet.from_csv(tmp_path / "bad.csv")


def test_identity_chain(rng):
    sig = gen_hadamard(8).subset(1)
    r = cdma_transmit(np.array([[1]]), sig, np.ones((1, 1, 1)), None, rng)
    assert np.array_equal(r, -sig.sequences[0])


def test_hadamard_correlators_separate_groups(rng):
    sig = gen_hadamard(16)
    b = rng.integers(0, 2, (16, 2))
    h = (rng.normal(size=(16, 2, 1)) + 1j * rng.normal(size=(16, 2, 1)))
    r = cdma_transmit(b, sig, h, None, rng)
    x = 1 - 2.0 * b
    for k in range(16):
        assert correlate(r, sig, k, 0) == pytest.approx((h[k, :, 0] * x[k]).sum(), abs=1e-12)


def test_small_multipath_hand_sum():
    sig = SignatureSet("custom", np.array([[1, 1, -1, 1], [1, -1, 1, 1]]))
    b = np.array([[0], [1]])
    prev, nxt = np.array([[1], [1]]), np.array([[0], [1]])
    h = np.array([[[1.0, 0.5j]], [[-0.3, 0.2]]])
    r = cdma_transmit(b, sig, h, None, None, edge_bits=(prev, nxt))
    J, L = 4, 2
    want = np.zeros(J + L - 1, complex)
    for j in range(J + L - 1):
        for k in range(2):
            for l in range(L):
                c = j - l  # chip index inside the current bit, may fall in a neighbour
                if c < 0:
                    chip = (1 - 2 * prev[k, 0]) * sig.sequences[k, c + J]
                elif c >= J:
                    chip = (1 - 2 * nxt[k, 0]) * sig.sequences[k, c - J]
                else:
                    chip = (1 - 2 * b[k, 0]) * sig.sequences[k, c]
                want[j] += h[k, 0, l] * chip
    assert np.allclose(r, want, atol=1e-14)


def test_correlate_hand():
    sig = SignatureSet("custom", np.array([[1, -1, 1, 1]]))
    r = np.array([0.5, 2.0, -1.0, 3.0, 7.0])
    assert correlate(r, sig, 0, 1) == pytest.approx((2.0 + 1.0 + 3.0 + 7.0) / 4)
    assert np.allclose(correlator_bank(r, sig, 1, 2), [[correlate(r, sig, 0, 0), correlate(r, sig, 0, 1)]])
    with pytest.raises(ConfigurationError):
        correlate(r, sig, 0, 2)


def test_correlator_noise_variance(rng):
    sig = gen_hadamard(16)
    noise = NoiseModel(2.0)  # sigma^2 = 1
    r = add_awgn(np.zeros((100_000, 16)), noise, rng)
    c = correlate(r, sig, 3, 0)
    assert c.real.var() == pytest.approx(noise.sigma2 / 16, rel=0.02)


def test_weights_and_combination():
    h = np.array([np.sqrt(3), 1.0])
    assert np.allclose(combining_weights(h[None]), [0.75, 0.25])
    e = np.array([[2.0], [-4.0]])
    assert combine_llrs(e, h) == pytest.approx([0.75 * 2.0 - 0.25 * 4.0])
    assert combine_llrs(np.array([[1.7, -0.2]]), np.ones((2, 1))) == pytest.approx([1.7, -0.2])
    eq = np.array([[1 + 1j, 1j * np.sqrt(2)]])
    assert np.allclose(combine_llrs(np.array([[1.0], [3.0]]), eq), [2.0])


def test_per_user_weighting():
    h = np.array([[1.0, 1.0], [np.sqrt(3), 1.0]])  # (P, L)
    w = combining_weights(h, "per_user")
    assert np.allclose(w, [[0.5, 0.5], [0.75, 0.25]])
    assert np.allclose(combining_weights(h), [0.625, 0.375])
    with pytest.raises(ConfigurationError):
        combining_weights(h, "max")
    with pytest.raises(ConfigurationError):
        combining_weights(np.zeros((1, 2)))


def test_single_path_reduces_to_flat_detector(rng):
    sig = gen_hadamard(16)
    noise = NoiseModel(16 / 10.0)
    b = rng.integers(0, 2, (50, 16, 2))
    h = rng.normal(size=(50, 16, 2, 1)) + 1j * rng.normal(size=(50, 16, 2, 1))
    r = cdma_transmit(b, sig, h, noise, rng)
    llr = cdma_detect(r, sig, h, noise)
    corr = correlator_bank(r, sig, 16, 1)[..., 0]
    ref = mldt_llrs(corr, superposition_levels(h[..., 0]), noise.sigma2 / 16)
    assert np.allclose(llr, ref, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3))
def test_msequence_multipath_noiseless_sign(seed, L):
    # one user per group, dominant first path: correct sign after combining
    rng = np.random.default_rng(seed)
    sig = gen_msequence(4)
    K = 15 // L
    b = rng.integers(0, 2, (K, 1))
    h = np.zeros((K, 1, L), complex)
    h[..., 0] = 1.0
    r = cdma_transmit(b, sig, h, None, rng)
    llr = cdma_detect(r, sig, h, NoiseModel(0.1))
    assert np.array_equal((llr < 0).astype(int), b)


def test_transmit_validation(rng):
    sig = gen_hadamard(4)
    with pytest.raises(ConfigurationError):
        cdma_transmit(np.zeros((5, 1), int), sig, np.ones((5, 1, 1)), None, rng)
    with pytest.raises(ConfigurationError):
        cdma_transmit(np.zeros((2, 1), int), sig, np.ones((2, 1)), None, rng)
