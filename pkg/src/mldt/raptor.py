"""Raptor coding for two collided users: high-rate LDPC precode plus LT code.

Each user precodes ``k`` message bits into ``k'`` bits and streams LT output
bits until the receiver acknowledges.  Symbols of both users arrive
superimposed over a quasi-static Rayleigh channel; the receiver runs MLDT,
one soft LT decoder per user and then either two SPA decoders (``spa``
path) or one GSPA decoder fed by joint likelihood vectors (``gspa`` path).

Energy convention matches ``analysis.estimate_capacity``: ``es_n0_db`` is the
average superimposed symbol energy over N0, split evenly between the users.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numba
import numpy as np
from scipy.special import expit

from .channel import draw_rayleigh
from .detector import LLR_MAX, mldt_llrs, superposition_levels
from .errors import ConfigurationError
from .gspa import gspa_decode
from .ldpc import ParityMatrix, construct_regular, spa_decode

DECODERS = ("spa", "gspa")


@dataclass(frozen=True, eq=False)
class LtDegreeDistribution:
    degrees: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.degrees, dtype=np.int64)
        p = np.asarray(self.probabilities, dtype=float)
        if d.shape != p.shape or d.ndim != 1 or d.size == 0:
            raise ConfigurationError("degrees and probabilities must be equal-length 1-D arrays")
        if np.any(d < 1) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ConfigurationError("degrees must be >= 1 and probabilities must sum to 1")
        object.__setattr__(self, "degrees", d)
        object.__setattr__(self, "probabilities", p / p.sum())

    @property
    def mean(self) -> float:
        return float(self.degrees @ self.probabilities)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.choice(self.degrees, size=size, p=self.probabilities)


def robust_soliton(k: int, c: float = 0.05, delta: float = 0.5) -> LtDegreeDistribution:
    """Luby's robust soliton distribution over degrees 1..k."""
    if k < 1 or c <= 0 or not 0 < delta < 1:
        raise ConfigurationError("robust soliton needs k >= 1, c > 0 and 0 < delta < 1")
    d = np.arange(1, k + 1)
    rho = np.empty(k)
    rho[0] = 1.0 / k
    rho[1:] = 1.0 / (d[1:] * (d[1:] - 1.0))
    R = c * math.log(k / delta) * math.sqrt(k)
    spike = int(round(k / R)) if R > 0 else k
    spike = min(max(spike, 1), k)
    tau = np.zeros(k)
    tau[: spike - 1] = R / (d[: spike - 1] * k)
    tau[spike - 1] = R * math.log(R / delta) / k if R > delta else 0.0
    mu = rho + np.maximum(tau, 0.0)
    return LtDegreeDistribution(d, mu / mu.sum())


@dataclass(frozen=True, eq=False)
class LtGraph:
    """Neighbour lists of LT output bits in CSR form (``indptr``, ``indices``)."""

    k: int
    indptr: np.ndarray
    indices: np.ndarray
    clamped: int = 0

    @property
    def num_outputs(self) -> int:
        return self.indptr.size - 1

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def prefix(self, count: int) -> "LtGraph":
        if not 1 <= count <= self.num_outputs:
            raise ConfigurationError(f"prefix length must be in 1..{self.num_outputs}")
        ptr = self.indptr[: count + 1]
        return LtGraph(self.k, ptr, self.indices[: ptr[-1]], self.clamped)

    def xor(self, precoded) -> np.ndarray:
        """Output bits for ``precoded`` of shape ``(..., k)``."""
        x = np.asarray(precoded, dtype=np.uint8)
        if x.shape[-1] != self.k:
            raise ConfigurationError(f"precoded block length {x.shape[-1]} != {self.k}")
        return np.bitwise_xor.reduceat(x[..., self.indices], self.indptr[:-1], axis=-1)


def lt_graph(k: int, count: int, rng: np.random.Generator, dist: LtDegreeDistribution | None = None) -> LtGraph:
    """Draw ``count`` output nodes: degree from ``dist``, then distinct uniform neighbours."""
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    dist = robust_soliton(k) if dist is None else dist
    deg = dist.sample(rng, count)
    clamped = int(np.count_nonzero(deg > k))
    deg = np.minimum(deg, k)
    indptr = np.zeros(count + 1, dtype=np.int64)
    np.cumsum(deg, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    for i, d in enumerate(deg):
        indices[indptr[i] : indptr[i + 1]] = rng.choice(k, size=d, replace=False)
    return LtGraph(k, indptr, indices, clamped)


def lt_encode(precoded, count: int, rng: np.random.Generator, dist: LtDegreeDistribution | None = None):
    """LT-encode a precoded block; returns ``(bits, graph)``.

    The graph depends only on ``rng``, so transmitter and receiver sharing a
    seed derive identical neighbour lists.  ``graph.clamped`` counts drawn
    degrees that exceeded the block length.
    """
    x = np.asarray(precoded, dtype=np.uint8)
    graph = lt_graph(x.shape[-1], count, rng, dist)
    return graph.xor(x), graph


@numba.njit(cache=True)
def _lt_bp(llrs, indptr, indices, in_ptr, in_edges, prior, max_iter, tol, llr_max):
    n_out = indptr.size - 1
    k = prior.size
    E = indices.size
    o2i = np.zeros(E)
    i2o = np.zeros(E)
    post = prior.copy()
    for it in range(max_iter):
        delta = 0.0
        for o in range(n_out):
            t_ch = math.tanh(0.5 * llrs[o])
            prod = t_ch
            zeros = 0
            for e in range(indptr[o], indptr[o + 1]):
                t = math.tanh(0.5 * i2o[e])
                if t == 0.0:
                    zeros += 1
                else:
                    prod *= t
            for e in range(indptr[o], indptr[o + 1]):
                t = math.tanh(0.5 * i2o[e])
                if zeros == 0:
                    v = prod / t
                elif zeros == 1 and t == 0.0:
                    v = prod
                else:
                    v = 0.0
                if v >= 1.0:
                    m = llr_max
                elif v <= -1.0:
                    m = -llr_max
                else:
                    m = math.log((1.0 + v) / (1.0 - v))
                    m = min(max(m, -llr_max), llr_max)
                d = abs(m - o2i[e])
                if d > delta:
                    delta = d
                o2i[e] = m
        for i in range(k):
            total = prior[i]
            for j in range(in_ptr[i], in_ptr[i + 1]):
                total += o2i[in_edges[j]]
            post[i] = total
            for j in range(in_ptr[i], in_ptr[i + 1]):
                e = in_edges[j]
                i2o[e] = min(max(total - o2i[e], -llr_max), llr_max)
        if delta <= tol:
            break
    return post, it + 1


def lt_decode_soft(
    llrs,
    graph: LtGraph,
    precode_len: int | None = None,
    max_iter: int = 200,
    prior=None,
    tol: float = 1e-9,
) -> np.ndarray:
    """Sum-product decoding on the LT graph; returns posterior LLRs of the ``k'`` precoded bits.

    Output nodes are parity checks tying their channel LLR to their
    neighbours.  Iteration stops early once no message moves by more than
    ``tol``.
    """
    x = np.asarray(llrs, dtype=float)
    k = graph.k if precode_len is None else precode_len
    if k != graph.k:
        raise ConfigurationError(f"precode_len {k} does not match graph block length {graph.k}")
    if x.ndim != 1 or x.size < 1:
        raise ConfigurationError("need at least one received LT symbol")
    g = graph if x.size == graph.num_outputs else graph.prefix(x.size)
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("LT channel LLRs must be finite")
    if max_iter < 1:
        raise ConfigurationError("max_iter must be >= 1")
    pr = np.zeros(k) if prior is None else np.asarray(prior, dtype=float).copy()
    in_edges = np.argsort(g.indices, kind="stable")
    in_ptr = np.zeros(k + 1, dtype=np.int64)
    np.cumsum(np.bincount(g.indices, minlength=k), out=in_ptr[1:])
    post, _ = _lt_bp(np.clip(x, -LLR_MAX, LLR_MAX), g.indptr, g.indices, in_ptr, in_edges, pr, max_iter, tol, LLR_MAX)
    return np.clip(post, -LLR_MAX, LLR_MAX)


def llrs_to_joint_vector(llr_a, llr_b) -> np.ndarray:
    """Product-form likelihood vector ``(p0, p1, p2, p3)`` over ``(b_A, b_B)``."""
    a1 = expit(-np.asarray(llr_a, dtype=float))  # P(b_A = 1)
    b1 = expit(-np.asarray(llr_b, dtype=float))
    a0, b0 = 1.0 - a1, 1.0 - b1
    p = np.stack([a0 * b0, a0 * b1, a1 * b0, a1 * b1], axis=-1)
    return p / p.sum(axis=-1, keepdims=True)


def default_precode(seed: int = 1) -> ParityMatrix:
    """(1000, 950) column-weight-3 precode, rate 0.95.

    Fifty checks of weight 60 cannot avoid 4-cycles, so girth is not enforced.
    """
    return construct_regular(1000, 50, 3, 60, seed, require_girth6=False)


@dataclass(frozen=True, eq=False)
class RaptorSession:
    """Fixed parameters of one rateless block exchange."""

    precode: ParityMatrix = field(default_factory=default_precode)
    ir_chunk: int = 400
    min_rate: float = 0.25
    lt_iterations: int = 200
    decoder_iterations: int = 100
    degree_distribution: LtDegreeDistribution | None = None
    early_exit: bool = True

    def __post_init__(self):
        if self.ir_chunk < 1:
            raise ConfigurationError("ir_chunk must be >= 1")
        if not 0 < self.min_rate <= 1:
            raise ConfigurationError("min_rate must be in (0, 1]")
        if self.lt_iterations < 1 or self.decoder_iterations < 1:
            raise ConfigurationError("iteration budgets must be >= 1")
        if self.precode.rank != self.precode.m:
            raise ConfigurationError("precode must have full rank")

    @property
    def k(self) -> int:
        return self.precode.k

    @property
    def k_prime(self) -> int:
        return self.precode.n

    @property
    def max_symbols(self) -> int:
        """First multiple of ``ir_chunk`` at which the code rate ``k/N`` drops below ``min_rate``."""
        return (math.floor(self.k / (self.min_rate * self.ir_chunk)) + 1) * self.ir_chunk

    @cached_property
    def distribution(self) -> LtDegreeDistribution:
        return robust_soliton(self.k_prime) if self.degree_distribution is None else self.degree_distribution


@dataclass(frozen=True)
class SessionOutcome:
    success: tuple[bool, bool]
    symbols: int
    aborted: bool
    message_bits: int

    @property
    def delivered_bits(self) -> int:
        return self.message_bits * sum(self.success)


def _receiver_llrs(r, levels, sigma2):
    if sigma2 is None:
        # noiseless: nearest level decides, at full confidence
        d = np.abs(r[:, None] - levels)
        idx = np.argmin(d, axis=1)
        bits = np.stack([idx >> 1, idx & 1], axis=-1)
        return LLR_MAX * (1.0 - 2.0 * bits)
    return mldt_llrs(r, levels, sigma2)


def run_session(
    config: RaptorSession,
    es_n0_db: float,
    decoder: str,
    rng: np.random.Generator,
) -> SessionOutcome:
    """Transmit one message block per user until both decode or the rate floor is hit.

    Every random quantity (messages, gains, LT graphs, the full-length noise
    sequence) is drawn up front in a fixed order, so sessions at different
    SNRs with the same ``rng`` state see common random numbers.  A decoded
    user keeps its success while the other continues; on abort each user is
    credited only if it had already decoded.  Decoding is not attempted while
    ``N < k``.  ``es_n0_db = inf`` disables noise.  Success is judged against
    the transmitted word, i.e. ideal error detection.
    """
    if decoder not in DECODERS:
        raise ConfigurationError(f"decoder must be one of {DECODERS}, got {decoder!r}")
    H = config.precode
    kp, n_max = config.k_prime, config.max_symbols
    msgs = rng.integers(0, 2, (2, config.k))
    unit_gains = draw_rayleigh(rng, 1.0, 2)
    graphs = [lt_graph(kp, n_max, rng, config.distribution) for _ in range(2)]
    noise = math.sqrt(0.5) * (rng.standard_normal(n_max) + 1j * rng.standard_normal(n_max))

    precoded = H.encoder.encode(msgs)
    tx_bits = np.stack([graphs[u].xor(precoded[u]) for u in range(2)], axis=-1)  # (n_max, 2)
    if math.isinf(es_n0_db) and es_n0_db > 0:
        sigma2 = None
        es = 1.0
    else:
        sigma2 = 0.5
        es = 10.0 ** (es_n0_db / 10.0)
    gains = math.sqrt(es / 2.0) * unit_gains
    levels = superposition_levels(gains)
    idx = 2 * tx_bits[:, 0] + tx_bits[:, 1]
    rx = levels[idx] + (0.0 if sigma2 is None else noise)

    done = [False, False]
    for N in range(config.ir_chunk, n_max + 1, config.ir_chunk):
        if N < config.k:
            # fewer binary symbols than message bits can never decode
            continue
        llr = _receiver_llrs(rx[:N], levels, sigma2)
        lt_post = [
            None if done[u] else lt_decode_soft(llr[:, u], graphs[u].prefix(N), kp, config.lt_iterations)
            for u in range(2)
        ]
        if decoder == "spa":
            for u in range(2):
                if not done[u]:
                    res = spa_decode(lt_post[u], H, config.decoder_iterations, config.early_exit)
                    done[u] = bool(np.array_equal(res.bits, precoded[u]))
        else:
            pinned = [LLR_MAX * (1.0 - 2.0 * precoded[u]) if done[u] else lt_post[u] for u in range(2)]
            res = gspa_decode(llrs_to_joint_vector(pinned[0], pinned[1]), H, config.decoder_iterations, config.early_exit)
            for u in range(2):
                done[u] = done[u] or bool(np.array_equal(res.bits[u], precoded[u]))
        if all(done):
            return SessionOutcome((True, True), N, False, config.k)
        if config.k < config.min_rate * N:
            return SessionOutcome((done[0], done[1]), N, True, config.k)
    raise AssertionError("unreachable: max_symbols always triggers the abort rule")
