"""Generalised sum-product decoding of P collided users sharing one binary code.

Every variable node carries a likelihood vector over the 2^P bit tuples.
Because all users' words satisfy the same parity checks, a check node
combines tuple vectors by convolution over (GF(2))^P: index ``i`` of the
output collects ``p[j] q[i XOR j]``.  Variable nodes multiply elementwise.

Messages are kept in the linear domain with renormalisation and a
probability floor; the variable-node product is formed through logs so
that leaving out the target edge is an exact subtraction.
"""

from __future__ import annotations

import numba
import numpy as np

from .detector import LLR_MAX, bit_table
from .errors import ConfigurationError
from .ldpc import DecodeResult, ParityMatrix

PROB_FLOOR = 1e-300

__all__ = ["var_update", "chk_update", "xor_convolve", "gspa_decode", "marginal_llrs", "PROB_FLOOR"]


def _normalize(p):
    s = p.sum(axis=-1, keepdims=True)
    return p / s


def xor_convolve(p, q):
    """``out[..., i] = sum_j p[..., j] q[..., i ^ j]`` (broadcasts over leading axes)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    Q = p.shape[-1]
    idx = np.arange(Q)
    out = p[..., :1] * q
    for j in range(1, Q):
        out = out + p[..., j : j + 1] * q[..., idx ^ j]
    return out


def _as_messages(msgs):
    arrs = [np.asarray(m, dtype=float) for m in msgs]
    if not arrs:
        raise ConfigurationError("need at least one message")
    Q = arrs[0].shape[-1]
    if any(a.shape[-1] != Q for a in arrs) or Q not in (2, 4, 8):
        raise ConfigurationError("messages must share a length of 2, 4 or 8")
    return arrs


def var_update(msgs, return_flag: bool = False):
    """Normalised elementwise product of likelihood vectors.

    An all-zero product (contradictory inputs) becomes the uniform vector;
    with ``return_flag`` the erasure flag is returned alongside.
    """
    arrs = _as_messages(msgs)
    prod = arrs[0]
    for a in arrs[1:]:
        prod = prod * a
    total = prod.sum(axis=-1, keepdims=True)
    erased = total <= 0
    Q = prod.shape[-1]
    out = np.where(erased, 1.0 / Q, prod / np.where(erased, 1.0, total))
    if return_flag:
        return out, np.squeeze(erased, -1)
    return out


def chk_update(msgs):
    """Normalised XOR-group convolution of likelihood vectors, folded left to right."""
    arrs = _as_messages(msgs)
    out = arrs[0]
    for a in arrs[1:]:
        out = xor_convolve(out, a)
    return _normalize(out)


def marginal_llrs(log_post) -> np.ndarray:
    """Per-user LLRs from tuple log-posteriors ``(..., Q)``; returns ``(..., P)``, clamped."""
    Q = log_post.shape[-1]
    p = int(np.log2(Q))
    bits = bit_table(p)
    post = _log_normalize(log_post)
    out = np.empty(log_post.shape[:-1] + (p,))
    with np.errstate(divide="ignore"):
        for u in range(p):
            zero = post[..., bits[:, u] == 0].sum(axis=-1)
            one = post[..., bits[:, u] == 1].sum(axis=-1)
            out[..., u] = np.log(zero) - np.log(one)
    return np.clip(out, -LLR_MAX, LLR_MAX)


@numba.njit(cache=True)
def _conv_into(a, b, out):
    Q = a.shape[0]
    for i in range(Q):
        acc = 0.0
        for j in range(Q):
            acc += a[j] * b[i ^ j]
        out[i] = acc


@numba.njit(cache=True)
def _check_node_kernel(v2c, check_view, check_deg, floor, out):
    """Extrinsic XOR convolutions for every check, prefix/suffix style."""
    B, E, Q = v2c.shape
    m, width = check_view.shape
    pre = np.empty((width, Q))
    suf = np.empty((width, Q))
    tmp = np.empty(Q)
    for b in range(B):
        for c in range(m):
            d = check_deg[c]
            if d == 1:
                out[b, check_view[c, 0], :] = 1.0 / Q
                continue
            pre[0, :] = v2c[b, check_view[c, 0], :]
            for i in range(1, d):
                _conv_into(pre[i - 1], v2c[b, check_view[c, i]], pre[i])
            suf[d - 1, :] = v2c[b, check_view[c, d - 1], :]
            for i in range(d - 2, -1, -1):
                _conv_into(suf[i + 1], v2c[b, check_view[c, i]], suf[i])
            for i in range(d):
                if i == 0:
                    tmp[:] = suf[1]
                elif i == d - 1:
                    tmp[:] = pre[d - 2]
                else:
                    _conv_into(pre[i - 1], suf[i + 1], tmp)
                total = 0.0
                for q in range(Q):
                    total += tmp[q]
                e = check_view[c, i]
                for q in range(Q):
                    v = tmp[q] / total
                    out[b, e, q] = v if v > floor else floor


def _log_normalize(x):
    x = x - x.max(axis=-1, keepdims=True)
    p = np.exp(x)
    return p / p.sum(axis=-1, keepdims=True)


def gspa_decode(channel_vectors, H: ParityMatrix, max_iter: int = 10, early_exit: bool = True) -> DecodeResult:
    """Decode ``(n, Q)`` or ``(B, n, Q)`` channel likelihood vectors with Q = 2^P.

    Returns a DecodeResult whose ``bits`` and ``llrs`` have a user axis:
    ``(P, n)`` per frame (``(B, P, n)`` batched).  ``converged`` is true when
    every user's hard decisions satisfy all checks.
    """
    x = np.asarray(channel_vectors, dtype=float)
    single = x.ndim == 2
    ch = x[None] if single else x
    if ch.ndim != 3 or ch.shape[1] != H.n:
        raise ConfigurationError(f"expected channel vectors of shape (B, {H.n}, Q)")
    Q = ch.shape[-1]
    if Q not in (2, 4, 8):
        raise ConfigurationError("GSPA supports P = 1, 2, 3 (vector length 2, 4, 8)")
    if max_iter < 1:
        raise ConfigurationError("max_iter must be >= 1")
    if np.any(ch < 0) or not np.all(np.isfinite(ch)):
        raise ConfigurationError("likelihood vectors must be finite and nonnegative")
    P = int(np.log2(Q))
    g = H.graph
    B = ch.shape[0]
    E = g.num_edges
    log_ch = np.log(np.maximum(_normalize(ch), PROB_FLOOR))

    check_deg = g.check_mask.sum(axis=1)
    log_c2v = np.zeros((B, E + 1, Q))  # last row pads the variable view: log 1
    log_post = log_ch.copy()
    bits = np.zeros((B, P, H.n), dtype=np.uint8)
    llrs = np.zeros((B, P, H.n))
    converged = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=np.int64)
    active = np.arange(B)
    for _ in range(max_iter):
        a_log_c2v = log_c2v[active]
        a_post = log_ch[active] + a_log_c2v[:, g.var_view].sum(axis=2)
        v2c = _log_normalize(a_post[:, g.edge_var] - a_log_c2v[:, :E])
        v2c = np.maximum(v2c, PROB_FLOOR)

        c2v = np.empty_like(v2c)
        _check_node_kernel(v2c, g.check_view, check_deg, PROB_FLOOR, c2v)
        a_log_c2v[:, :E] = np.log(c2v)

        a_post = log_ch[active] + a_log_c2v[:, g.var_view].sum(axis=2)
        a_llr = np.moveaxis(marginal_llrs(a_post), -1, 1)  # (b, P, n)
        a_bits = (a_llr < 0).astype(np.uint8)
        log_c2v[active] = a_log_c2v
        log_post[active] = a_post
        llrs[active] = a_llr
        bits[active] = a_bits
        iters[active] += 1
        ok = np.all(H.is_codeword(a_bits), axis=1)
        converged[active] = ok
        if early_exit:
            active = active[~ok]
            if active.size == 0:
                break
    if single:
        return DecodeResult(bits[0], llrs[0], bool(converged[0]), int(iters[0]))
    return DecodeResult(bits, llrs, converged, iters)
