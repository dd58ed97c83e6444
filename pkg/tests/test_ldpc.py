import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mldt import ConfigurationError
from mldt.detector import LLR_MAX
from mldt.ldpc import (
    ParityMatrix,
    boxplus,
    construct_regular,
    default_code,
    encode,
    format_alist,
    gf2_rref,
    leave_one_out,
    parse_alist,
    read_alist,
    spa_decode,
    write_alist,
)


@pytest.fixture(scope="module")
def toy():
    return construct_regular(12, 6, 3, 6, seed=0, require_girth6=False)


@pytest.fixture(scope="module")
def big():
    return default_code()


def all_codewords(H):
    msgs = np.array(list(itertools.product([0, 1], repeat=H.k)))
    return H.encoder.encode(msgs)


def bitwise_map(llrs, codewords):
    # log P(c | llr) up to a constant: sum_j (1 - 2 c_j) llr_j / 2
    metric = ((1 - 2.0 * codewords) @ llrs) / 2
    w = np.exp(metric - metric.max())
    p1 = (w[:, None] * codewords).sum(axis=0) / w.sum()
    return (p1 > 0.5).astype(np.uint8), p1


def test_workhorse_code(big):
    assert (big.n, big.m, big.num_edges) == (1008, 504, 3024)
    assert np.all(big.col_weights == 3) and np.all(big.row_weights == 6)
    assert not big.has_4_cycles()
    assert big.k == 504 and big.rate == 0.5


def test_construction_is_seeded():
    a = construct_regular(96, 48, 3, 6, seed=7)
    b = construct_regular(96, 48, 3, 6, seed=7)
    c = construct_regular(96, 48, 3, 6, seed=8)
    assert np.array_equal(a.dense(), b.dense())
    assert not np.array_equal(a.dense(), c.dense())
    assert not a.has_4_cycles()


def test_infeasible_parameters():
    with pytest.raises(ConfigurationError, match="infeasible"):
        construct_regular(10, 6, 3, 6)


def test_girth_failure_reported():
    # six checks cannot host 12 weight-3 columns without sharing pairs
    with pytest.raises(ConfigurationError):
        construct_regular(12, 6, 3, 6, seed=0, max_retries=3)


def test_toy_encodings_exhaustive(toy):
    cws = all_codewords(toy)
    assert cws.shape == (64, 12)
    assert len({c.tobytes() for c in cws}) == 64
    assert np.all(toy.dense().astype(int) @ cws.T % 2 == 0)
    assert np.all(toy.is_codeword(cws))
    assert np.array_equal(toy.encoder.extract(cws), np.array(list(itertools.product([0, 1], repeat=6))))


def test_zero_message(big):
    assert not encode(np.zeros(504, dtype=int), big).any()


def test_random_encodings_valid(big, rng):
    cw = encode(rng.integers(0, 2, (50, 504)), big)
    assert np.all(big.is_codeword(cw))


def test_rank_deficient_rejected():
    H = ParityMatrix.from_dense([[1, 1, 0], [1, 1, 0]])
    with pytest.raises(ConfigurationError, match="rank"):
        encode([0], H)


def test_gf2_rref():
    R, piv = gf2_rref([[1, 1, 0], [0, 1, 1], [1, 0, 1]])
    assert piv == [0, 1]
    assert R[:2].tolist() == [[1, 0, 1], [0, 1, 1]] and not R[2].any()


def test_alist_roundtrip(big, tmp_path):
    path = tmp_path / "code.alist"
    write_alist(big, path)
    back = read_alist(path)
    assert np.array_equal(back.dense(), big.dense())
    assert format_alist(back) == path.read_text()


def test_alist_malformed():
    with pytest.raises(ConfigurationError):
        parse_alist("3 2\n2 3\n1 1\n")
    with pytest.raises(ConfigurationError):
        parse_alist("2 1\n1 2\n1 1\n2\n1\n1\n1 1\n")


def test_noiseless_fixed_point(big, rng):
    cw = encode(rng.integers(0, 2, 504), big)
    res = spa_decode(LLR_MAX * (1 - 2.0 * cw), big)
    assert res.converged and res.iterations == 1
    assert np.array_equal(res.bits, cw)


def test_single_flip_corrected(big, rng):
    cw = encode(rng.integers(0, 2, 504), big)
    llr = 8.0 * (1 - 2.0 * cw)
    llr[17] = -llr[17]
    res = spa_decode(llr, big, max_iter=10)
    assert res.converged and res.iterations <= 10
    assert np.array_equal(res.bits, cw)


def reference_spa(D, ch, max_iter=10):
    """Textbook flooding tanh-rule SPA over a dense matrix, one edge at a time."""
    m, n = D.shape
    edges = [(c, v) for c in range(m) for v in range(n) if D[c, v]]
    c2v = dict.fromkeys(edges, 0.0)
    for _ in range(max_iter):
        v2c = {(c, v): ch[v] + sum(c2v[(d, v)] for d in range(m) if D[d, v] and d != c) for c, v in edges}
        for c, v in edges:
            t = np.prod([np.tanh(v2c[(c, u)] / 2) for u in range(n) if D[c, u] and u != v])
            c2v[(c, v)] = 2 * np.arctanh(np.clip(t, -1 + 1e-16, 1 - 1e-16))
        post = np.array([ch[v] + sum(c2v[(c, v)] for c in range(m) if D[c, v]) for v in range(n)])
        bits = (post < 0).astype(np.uint8)
        if not (D.astype(int) @ bits % 2).any():
            break
    return bits, post


def test_toy_single_errors_match_bitwise_map(toy):
    cws = all_codewords(toy)
    for cw in cws:
        for i in range(12):
            llr = 5.0 * (1 - 2.0 * cw)
            llr[i] *= -1
            ref, _ = bitwise_map(llr, cws)
            assert np.array_equal(spa_decode(llr, toy).bits, ref)


def test_toy_matches_reference_decoder(toy, rng):
    D = toy.dense()
    cws = all_codewords(toy)
    frames = [5.0 * (1 - 2.0 * cw) for cw in cws[:4]]
    for f in frames[:]:
        for pair in itertools.combinations(range(12), 2):
            g = f.copy()
            g[list(pair)] *= -1
            frames.append(g)
    frames.extend(rng.normal(1.0, 2.0, (100, 12)))
    for ch in frames:
        bits, post = reference_spa(D, ch)
        res = spa_decode(ch, toy)
        assert np.array_equal(res.bits, bits)
        assert np.allclose(res.llrs, np.clip(post, -LLR_MAX, LLR_MAX), atol=1e-9)


def test_batch_equals_single(big, rng):
    llr = rng.normal(1.0, 2.0, (4, 1008))
    batch = spa_decode(llr, big)
    for i in range(4):
        one = spa_decode(llr[i], big)
        assert np.array_equal(one.bits, batch.bits[i])
        assert np.allclose(one.llrs, batch.llrs[i])


def test_strict_iterations(big, rng):
    cw = np.zeros(1008)
    res = spa_decode(4.0 + rng.normal(0, 1, (3, 1008)), big, max_iter=7, early_exit=False)
    assert np.all(res.iterations == 7)
    assert np.all(res.bits == cw)


def test_decoder_input_validation(big):
    with pytest.raises(ConfigurationError):
        spa_decode(np.zeros(10), big)
    with pytest.raises(ConfigurationError):
        spa_decode(np.full(1008, np.nan), big)


def test_boxplus_exact():
    a, b = 1.3, -0.4
    pa, pb = 1 / (1 + np.exp(-a)), 1 / (1 + np.exp(-b))  # P(bit = 0)
    p0 = pa * pb + (1 - pa) * (1 - pb)
    assert boxplus(a, b) == pytest.approx(np.log(p0 / (1 - p0)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=2, max_size=8))
def test_leave_one_out_matches_direct(vals):
    x = np.array(vals)
    out = leave_one_out(x, boxplus)
    for i in range(len(x)):
        rest = np.delete(x, i)
        acc = rest[0]
        for v in rest[1:]:
            acc = boxplus(acc, v)
        assert out[i] == pytest.approx(acc, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 6.0))
def test_decoder_output_invariants(seed, scale):
    H = default_code()
    rng = np.random.default_rng(seed)
    cw = encode(rng.integers(0, 2, 504), H)
    llr = scale * (1 - 2.0 * cw) + rng.normal(0, 2.0, 1008)
    res = spa_decode(llr, H)
    assert np.all(np.abs(res.llrs) <= LLR_MAX)
    assert np.array_equal(res.bits, (res.llrs < 0).astype(np.uint8))
    assert res.converged == bool(H.is_codeword(res.bits))
    assert 1 <= res.iterations <= 10
