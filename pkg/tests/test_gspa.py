import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mldt import ConfigurationError
from mldt.detector import LLR_MAX, bits_to_index, log_likelihoods, superposition_levels
from mldt.gspa import chk_update, gspa_decode, var_update, xor_convolve
from mldt.ldpc import construct_regular, default_code, encode, spa_decode

prob_vec = hnp.arrays(np.float64, st.sampled_from([2, 4, 8]), elements=st.floats(0.01, 1.0))


def brute_xor(p, q):
    out = np.zeros(len(p))
    for i in range(len(p)):
        for j in range(len(q)):
            out[i ^ j] += p[i] * q[j]
    return out / out.sum()


def delta(i, q=8):
    d = np.zeros(q)
    d[i] = 1.0
    return d


def test_var_identity_and_example():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    assert np.allclose(var_update([np.full(4, 0.25), p]), p)
    assert np.allclose(var_update([[0.5, 0.5, 0, 0], [0.5, 0, 0.5, 0]]), [1, 0, 0, 0])


def test_var_contradiction_is_flagged():
    out, erased = var_update([[1, 0, 0, 0], [0, 1, 0, 0]], return_flag=True)
    assert erased and np.allclose(out, 0.25)


def test_chk_examples():
    q = np.array([0.1, 0.2, 0.3, 0.4])
    assert np.allclose(chk_update([np.full(4, 0.25), q]), 0.25)
    assert np.allclose(chk_update([delta(2), delta(5)]), delta(7))
    assert np.allclose(chk_update([q, delta(0, 4)]), q)


def test_message_validation():
    with pytest.raises(ConfigurationError):
        chk_update([[0.5, 0.5], [0.2, 0.3, 0.5]])
    with pytest.raises(ConfigurationError):
        var_update([[1.0, 0, 0]])


def test_chk_matches_brute_force(rng):
    for q in (2, 4, 8):
        p = rng.random((500, q))
        r = rng.random((500, q))
        fast = chk_update([p, r])
        for i in range(0, 500, 25):
            assert np.allclose(fast[i], brute_xor(p[i], r[i]), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(prob_vec, st.data())
def test_update_algebra(p, data):
    q = data.draw(hnp.arrays(np.float64, p.shape, elements=st.floats(0.01, 1.0)))
    r = data.draw(hnp.arrays(np.float64, p.shape, elements=st.floats(0.01, 1.0)))
    for op in (var_update, chk_update):
        assert np.allclose(op([p, q]), op([q, p]), atol=1e-12)
        assert np.allclose(op([op([p, q]), r]), op([p, op([q, r])]), atol=1e-12)
        assert op([p, q]).sum() == pytest.approx(1.0)
    assert np.allclose(xor_convolve(p, q), xor_convolve(q, p))


def test_p1_reduces_to_spa(rng):
    H = default_code()
    cw = encode(rng.integers(0, 2, (100, 504)), H)
    llr = 1.5 * (1 - 2.0 * cw) + rng.normal(0, 1.6, cw.shape)
    vec = np.stack([1 / (1 + np.exp(-llr)), 1 / (1 + np.exp(llr))], axis=-1)
    g = gspa_decode(vec, H)
    s = spa_decode(llr, H)
    assert np.allclose(g.llrs[:, 0], s.llrs, atol=1e-9)
    assert np.array_equal(g.bits[:, 0], s.bits)
    assert np.array_equal(g.iterations, s.iterations)


def test_noiseless_two_users(rng):
    H = default_code()
    cw = encode(rng.integers(0, 2, (2, 504)), H)
    idx = bits_to_index(cw.T)
    res = gspa_decode(np.eye(4)[idx], H)
    assert res.converged and res.iterations == 1
    assert np.array_equal(res.bits, cw)
    assert np.all(np.abs(res.llrs) == LLR_MAX)


def test_matches_joint_map_on_toy_code():
    H = construct_regular(12, 6, 3, 6, seed=0, require_girth6=False)
    cws = H.encoder.encode(np.array(list(itertools.product([0, 1], repeat=6))))
    pair_idx = bits_to_index(np.stack(np.broadcast_arrays(cws[:, None, :], cws[None, :, :]), -1))  # (64, 64, 12)
    rng = np.random.default_rng(1)
    s2 = 0.05
    hits = trials = 0
    for _ in range(200):
        h = (rng.normal(size=2) + 1j * rng.normal(size=2)) / np.sqrt(2)
        lv = superposition_levels(h)
        a, b = rng.integers(0, 64, 2)
        r = lv[bits_to_index(np.stack([cws[a], cws[b]], -1))]
        r = r + np.sqrt(s2) * (rng.normal(size=12) + 1j * rng.normal(size=12))
        ll = log_likelihoods(r, lv, s2)
        score = np.take_along_axis(np.broadcast_to(ll, (64, 64, 12, 4)), pair_idx[..., None], -1)[..., 0].sum(-1)
        ma, mb = np.unravel_index(score.argmax(), score.shape)
        res = gspa_decode(np.exp(ll - ll.max(-1, keepdims=True)), H)
        hits += np.array_equal(res.bits[0], cws[ma]) + np.array_equal(res.bits[1], cws[mb])
        trials += 2
    assert hits / trials >= 0.90


def test_batch_shapes(rng):
    H = default_code()
    vec = rng.random((3, 1008, 8))
    res = gspa_decode(vec, H, max_iter=2, early_exit=False)
    assert res.bits.shape == (3, 3, 1008) and res.llrs.shape == (3, 3, 1008)
    assert np.all(res.iterations == 2)


def test_decoder_validation():
    H = default_code()
    with pytest.raises(ConfigurationError):
        gspa_decode(np.ones((1008, 3)), H)
    with pytest.raises(ConfigurationError):
        gspa_decode(-np.ones((1008, 4)), H)
    with pytest.raises(ConfigurationError):
        gspa_decode(np.ones((10, 4)), H)
