"""Binary LDPC codes: construction, alist I/O, encoding and sum-product decoding.

Regular codes are built with progressive edge growth (PEG): each new edge of
a variable node goes to the check that is farthest from it in the current
graph, ties broken by lowest check degree and then by a seeded RNG.  Checks
that already hold ``row_weight`` edges are never chosen, so row weights come
out exact.

The decoder works in the LLR domain with a flooding schedule.  Check nodes
use the exact pairwise rule

    a [+] b = sign(a) sign(b) min(|a|, |b|) + log1p(e^-|a+b|) - log1p(e^-|a-b|)

which is the tanh rule rewritten so that large messages keep full precision.
All decoding functions accept a single frame ``(n,)`` or a batch ``(B, n)``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import NamedTuple

import numba
import numpy as np

from .detector import LLR_MAX
from .errors import ConfigurationError

@dataclass(frozen=True, eq=False)
class ParityMatrix:
    """Sparse parity-check matrix stored as its edge list, sorted by (check, variable)."""

    n: int
    m: int
    check_idx: np.ndarray
    var_idx: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.check_idx, dtype=np.int64)
        v = np.asarray(self.var_idx, dtype=np.int64)
        if c.shape != v.shape or c.ndim != 1:
            raise ConfigurationError("edge arrays must be 1-D and equally long")
        if c.size and (c.min() < 0 or c.max() >= self.m or v.min() < 0 or v.max() >= self.n):
            raise ConfigurationError("edge index out of range")
        order = np.lexsort((v, c))
        c, v = c[order], v[order]
        if c.size > 1 and np.any((np.diff(c) == 0) & (np.diff(v) == 0)):
            raise ConfigurationError("parallel edges are not allowed")
        c.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "check_idx", c)
        object.__setattr__(self, "var_idx", v)

    @classmethod
    def from_dense(cls, H) -> "ParityMatrix":
        H = np.asarray(H)
        c, v = np.nonzero(H % 2)
        return cls(H.shape[1], H.shape[0], c, v)

    @property
    def num_edges(self) -> int:
        return int(self.check_idx.size)

    @property
    def col_weights(self) -> np.ndarray:
        return np.bincount(self.var_idx, minlength=self.n)

    @property
    def row_weights(self) -> np.ndarray:
        return np.bincount(self.check_idx, minlength=self.m)

    def dense(self) -> np.ndarray:
        H = np.zeros((self.m, self.n), dtype=np.uint8)
        H[self.check_idx, self.var_idx] = 1
        return H

    def syndrome(self, bits) -> np.ndarray:
        """``H b`` over GF(2) for ``bits`` of shape ``(..., n)``; returns ``(..., m)``."""
        b = np.asarray(bits, dtype=np.uint8)
        if b.shape[-1] != self.n:
            raise ConfigurationError(f"expected {self.n} bits per word, got {b.shape[-1]}")
        g = self.graph
        padded = np.concatenate([b[..., self.var_idx], np.zeros(b.shape[:-1] + (1,), np.uint8)], axis=-1)
        return (padded[..., g.check_view].sum(axis=-1, dtype=np.int64) & 1).astype(np.uint8)

    def is_codeword(self, bits) -> np.ndarray:
        return ~np.any(self.syndrome(bits), axis=-1)

    def has_4_cycles(self) -> bool:
        H = self.dense().astype(np.int32)
        overlap = H @ H.T
        np.fill_diagonal(overlap, 0)
        return bool(np.any(overlap >= 2))

    @cached_property
    def graph(self) -> "_Graph":
        return _Graph.build(self)

    @cached_property
    def encoder(self) -> "SystematicEncoder":
        return SystematicEncoder(self)

    @property
    def rank(self) -> int:
        return self.encoder.rank

    @property
    def k(self) -> int:
        return self.encoder.k

    @property
    def rate(self) -> float:
        return self.k / self.n


class _Graph(NamedTuple):
    """Padded edge-index views used by the message-passing decoders."""

    num_edges: int
    check_view: np.ndarray  # (m, dc_max) edge ids, padded with num_edges
    check_mask: np.ndarray
    var_view: np.ndarray  # (n, dv_max) edge ids, padded with num_edges
    var_mask: np.ndarray
    edge_var: np.ndarray
    edge_check: np.ndarray

    @classmethod
    def build(cls, H: ParityMatrix) -> "_Graph":
        E = H.num_edges
        return cls(
            E,
            *_padded_view(H.check_idx, H.m, E),
            *_padded_view(H.var_idx, H.n, E),
            H.var_idx,
            H.check_idx,
        )


def _padded_view(owner: np.ndarray, count: int, pad: int):
    """Edge ids grouped by their owning node, one row per node."""
    order = np.argsort(owner, kind="stable")
    deg = np.bincount(owner, minlength=count)
    width = max(int(deg.max()) if deg.size else 0, 1)
    view = np.full((count, width), pad, dtype=np.int64)
    mask = np.zeros((count, width), dtype=bool)
    start = np.concatenate(([0], np.cumsum(deg)[:-1]))
    sorted_owner = owner[order]
    slot = np.arange(owner.size) - start[sorted_owner]
    view[sorted_owner, slot] = order
    mask[sorted_owner, slot] = True
    return view, mask


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def _peg(n: int, m: int, col_weight: int, row_weight: int, rng: np.random.Generator):
    H = np.zeros((m, n), dtype=np.float32)
    deg = np.zeros(m, dtype=np.int64)
    for v in range(n):
        for _ in range(col_weight):
            eligible = (deg < row_weight) & (H[:, v] == 0)
            if not eligible.any():
                return None
            dist = _check_distances(H, v)
            far = np.where(eligible, dist, -1)
            cand = np.flatnonzero(far == far.max())
            low = cand[deg[cand] == deg[cand].min()]
            c = rng.choice(low)
            H[c, v] = 1.0
            deg[c] += 1
    return H


def _check_distances(H: np.ndarray, v: int) -> np.ndarray:
    """BFS distance (in check-layer hops) from variable ``v`` to every check; unreachable = large."""
    m = H.shape[0]
    unreached = np.iinfo(np.int64).max // 2
    dist = np.full(m, unreached, dtype=np.int64)
    frontier = H[:, v] > 0
    if not frontier.any():
        return dist
    seen_vars = np.zeros(H.shape[1], dtype=bool)
    seen_vars[v] = True
    depth = 0
    while frontier.any():
        dist[frontier] = depth
        vars_ = (frontier.astype(np.float32) @ H > 0) & ~seen_vars
        if not vars_.any():
            break
        seen_vars |= vars_
        checks = (H @ vars_.astype(np.float32) > 0) & (dist == unreached)
        frontier = checks
        depth += 1
    return dist


def construct_regular(
    n: int,
    m: int,
    col_weight: int = 3,
    row_weight: int = 6,
    seed: int = 0,
    *,
    require_girth6: bool = True,
    require_full_rank: bool = True,
    max_retries: int = 20,
) -> ParityMatrix:
    """Seeded (col_weight, row_weight)-regular PEG code.

    Retries with derived seeds until the graph is free of 4-cycles (if
    required) and ``H`` has full rank (if required).
    """
    if n <= 0 or m <= 0 or col_weight <= 0 or row_weight <= 0:
        raise ConfigurationError("code dimensions and weights must be positive")
    if n * col_weight != m * row_weight:
        raise ConfigurationError(
            f"infeasible regular code: n*col_weight = {n * col_weight} != m*row_weight = {m * row_weight}"
        )
    if col_weight > m or row_weight > n:
        raise ConfigurationError("weights exceed matrix dimensions")
    return _construct_cached(n, m, col_weight, row_weight, seed, require_girth6, require_full_rank, max_retries)


@lru_cache(maxsize=16)
def _construct_cached(n, m, col_weight, row_weight, seed, require_girth6, require_full_rank, max_retries):
    for attempt in range(max_retries):
        rng = np.random.default_rng([seed, attempt])
        H = _peg(n, m, col_weight, row_weight, rng)
        if H is None:
            continue
        pm = ParityMatrix.from_dense(H.astype(np.uint8))
        if require_girth6 and pm.has_4_cycles():
            continue
        if require_full_rank and pm.rank != m:
            continue
        return pm
    raise ConfigurationError(
        f"could not build a ({col_weight},{row_weight})-regular code n={n} m={m} after {max_retries} attempts"
    )


@lru_cache(maxsize=4)
def default_code(seed: int = 1) -> ParityMatrix:
    """The (1008, 504) (3,6)-regular workhorse code."""
    return construct_regular(1008, 504, 3, 6, seed)


# ---------------------------------------------------------------------------
# alist interchange
# ---------------------------------------------------------------------------


def format_alist(H: ParityMatrix) -> str:
    cols = [[] for _ in range(H.n)]
    rows = [[] for _ in range(H.m)]
    for c, v in zip(H.check_idx.tolist(), H.var_idx.tolist()):
        cols[v].append(c + 1)
        rows[c].append(v + 1)
    dv = max((len(c) for c in cols), default=0)
    dc = max((len(r) for r in rows), default=0)
    out = io.StringIO()
    out.write(f"{H.n} {H.m}\n{dv} {dc}\n")
    out.write(" ".join(str(len(c)) for c in cols) + "\n")
    out.write(" ".join(str(len(r)) for r in rows) + "\n")
    for c in cols:
        out.write(" ".join(str(x) for x in c + [0] * (dv - len(c))) + "\n")
    for r in rows:
        out.write(" ".join(str(x) for x in r + [0] * (dc - len(r))) + "\n")
    return out.getvalue()


def parse_alist(text: str) -> ParityMatrix:
    lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    try:
        n, m = int(lines[0][0]), int(lines[0][1])
        col_w = [int(x) for x in lines[2]]
        row_w = [int(x) for x in lines[3]]
        if len(col_w) != n or len(row_w) != m:
            raise ConfigurationError("alist degree lists do not match the header")
        checks, vars_ = [], []
        for v in range(n):
            idx = [int(x) for x in lines[4 + v] if int(x) != 0]
            if len(idx) != col_w[v]:
                raise ConfigurationError(f"alist column {v + 1}: expected {col_w[v]} entries")
            checks.extend(i - 1 for i in idx)
            vars_.extend([v] * len(idx))
        H = ParityMatrix(n, m, np.array(checks, dtype=np.int64), np.array(vars_, dtype=np.int64))
        if len(lines) >= 4 + n + m:
            for c in range(m):
                idx = sorted(int(x) - 1 for x in lines[4 + n + c] if int(x) != 0)
                if idx != sorted(H.var_idx[H.check_idx == c].tolist()):
                    raise ConfigurationError(f"alist row {c + 1} disagrees with the column lists")
    except (IndexError, ValueError) as exc:
        raise ConfigurationError(f"malformed alist data: {exc}") from exc
    return H


def read_alist(path) -> ParityMatrix:
    return parse_alist(Path(path).read_text())


def write_alist(H: ParityMatrix, path) -> None:
    Path(path).write_text(format_alist(H))


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------


def gf2_rref(A) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2); returns (matrix, pivot columns)."""
    M = (np.asarray(A) % 2).astype(np.uint8).copy()
    rows, cols = M.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hits = np.flatnonzero(M[r:, c]) + r
        if hits.size == 0:
            continue
        p = hits[0]
        if p != r:
            M[[r, p]] = M[[p, r]]
        others = np.flatnonzero(M[:, c])
        others = others[others != r]
        M[others] ^= M[r]
        pivots.append(c)
        r += 1
    return M, pivots


class SystematicEncoder:
    """Encoder derived once from ``H`` by Gaussian elimination over GF(2).

    Non-pivot columns carry the message; pivot columns are parity bits.
    """

    def __init__(self, H: ParityMatrix):
        R, pivots = gf2_rref(H.dense())
        self.n = H.n
        self.rank = len(pivots)
        self.parity_positions = np.asarray(pivots, dtype=np.int64)
        mask = np.ones(H.n, dtype=bool)
        mask[self.parity_positions] = False
        self.info_positions = np.flatnonzero(mask)
        self.k = int(self.info_positions.size)
        self._A = R[: self.rank][:, self.info_positions].astype(np.int64)

    def encode(self, msg) -> np.ndarray:
        d = np.asarray(msg, dtype=np.int64)
        if d.shape[-1] != self.k:
            raise ConfigurationError(f"message length {d.shape[-1]} != k = {self.k}")
        cw = np.zeros(d.shape[:-1] + (self.n,), dtype=np.uint8)
        cw[..., self.info_positions] = d & 1
        cw[..., self.parity_positions] = (d @ self._A.T) & 1
        return cw

    def extract(self, codeword) -> np.ndarray:
        return np.asarray(codeword)[..., self.info_positions]


def encode(msg, H: ParityMatrix) -> np.ndarray:
    if H.rank != H.m:
        raise ConfigurationError(f"parity matrix is rank deficient ({H.rank} < {H.m})")
    return H.encoder.encode(msg)


# ---------------------------------------------------------------------------
# sum-product decoding
# ---------------------------------------------------------------------------


class DecodeResult(NamedTuple):
    bits: np.ndarray
    llrs: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray


def boxplus(a, b):
    """Exact check-node combination of two LLRs."""
    sgn = np.where(a < 0, -1.0, 1.0) * np.where(b < 0, -1.0, 1.0)
    mn = np.minimum(np.abs(a), np.abs(b))
    return sgn * mn + np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b)))


def leave_one_out(x, combine, axis=-1):
    """``out[i] = combine(x[j] for j != i)`` along ``axis`` via prefix/suffix sweeps.

    ``combine`` must be associative and commutative; the axis needs length >= 2.
    """
    x = np.moveaxis(x, axis, 0)
    d = x.shape[0]
    pre = np.empty_like(x)
    suf = np.empty_like(x)
    pre[1] = x[0]
    suf[d - 2] = x[d - 1]
    for i in range(2, d):
        pre[i] = combine(pre[i - 1], x[i - 1])
        suf[d - 1 - i] = combine(suf[d - i], x[d - i])
    out = np.empty_like(x)
    out[0] = suf[0]
    out[d - 1] = pre[d - 1]
    for i in range(1, d - 1):
        out[i] = combine(pre[i], suf[i])
    return np.moveaxis(out, 0, axis)


@numba.njit(cache=True)
def _boxplus1(a, b):
    s = -1.0 if (a < 0) != (b < 0) else 1.0
    return s * min(abs(a), abs(b)) + math.log1p(math.exp(-abs(a + b))) - math.log1p(math.exp(-abs(a - b)))


@numba.njit(cache=True)
def _check_kernel(v2c, check_view, check_deg, out):
    B = v2c.shape[0]
    m, width = check_view.shape
    pre = np.empty(width)
    suf = np.empty(width)
    for b in range(B):
        for c in range(m):
            d = check_deg[c]
            if d == 1:
                out[b, check_view[c, 0]] = 0.0
                continue
            pre[0] = v2c[b, check_view[c, 0]]
            for i in range(1, d):
                pre[i] = _boxplus1(pre[i - 1], v2c[b, check_view[c, i]])
            suf[d - 1] = v2c[b, check_view[c, d - 1]]
            for i in range(d - 2, -1, -1):
                suf[i] = _boxplus1(suf[i + 1], v2c[b, check_view[c, i]])
            out[b, check_view[c, 0]] = suf[1]
            out[b, check_view[c, d - 1]] = pre[d - 2]
            for i in range(1, d - 1):
                out[b, check_view[c, i]] = _boxplus1(pre[i - 1], suf[i + 1])


def _check_messages(v2c, g: _Graph):
    """Extrinsic check-to-variable LLRs for every edge. ``v2c`` has shape (B, E)."""
    out = np.empty_like(v2c)
    _check_kernel(np.ascontiguousarray(v2c), g.check_view, g.check_mask.sum(axis=1), out)
    return out


def _variable_sums(c2v, g: _Graph):
    B = c2v.shape[0]
    padded = np.concatenate([c2v, np.zeros((B, 1))], axis=1)
    return padded[:, g.var_view].sum(axis=-1)


def spa_decode(llrs, H: ParityMatrix, max_iter: int = 10, early_exit: bool = True) -> DecodeResult:
    """Flooding sum-product decoding of channel LLRs (``ln P(0)/P(1)``).

    Returns hard decisions, posterior LLRs clamped to +-LLR_MAX, a convergence
    flag (zero syndrome) and the number of iterations run, per frame.
    """
    x = np.asarray(llrs, dtype=float)
    single = x.ndim == 1
    ch = np.atleast_2d(x)
    if ch.shape[-1] != H.n:
        raise ConfigurationError(f"expected {H.n} LLRs per frame, got {ch.shape[-1]}")
    if not np.all(np.isfinite(ch)):
        raise ConfigurationError("channel LLRs must be finite")
    if max_iter < 1:
        raise ConfigurationError("max_iter must be >= 1")
    ch = np.clip(ch, -LLR_MAX, LLR_MAX)
    g = H.graph
    B = ch.shape[0]
    post = ch.copy()
    bits = (post < 0).astype(np.uint8)
    converged = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=np.int64)
    c2v = np.zeros((B, g.num_edges))
    active = np.arange(B)
    for _ in range(max_iter):
        a_ch = ch[active]
        a_c2v = c2v[active]
        a_post = a_ch + _variable_sums(a_c2v, g)
        v2c = a_post[:, g.edge_var] - a_c2v
        a_c2v = _check_messages(v2c, g)
        a_post = a_ch + _variable_sums(a_c2v, g)
        c2v[active] = a_c2v
        post[active] = a_post
        bits[active] = a_post < 0
        iters[active] += 1
        ok = H.is_codeword(bits[active])
        converged[active] = ok
        if early_exit:
            active = active[~ok]
            if active.size == 0:
                break
    out_llr = np.clip(post, -LLR_MAX, LLR_MAX)
    if single:
        return DecodeResult(bits[0], out_llr[0], bool(converged[0]), int(iters[0]))
    return DecodeResult(bits, out_llr, converged, iters)
