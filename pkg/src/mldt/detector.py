"""Multilevel detection (MLDT) of P collided BPSK users.

The superposition of P users with known gains is a 2^P-level signal.  Tuple
index ``i`` packs the collided bits MSB first, i.e. ``i = 4 b_A + 2 b_B + b_C``
for three users and ``i = 2 b_A + b_B`` for two.  Level ``i`` is
``sum_p (-1)^{bit_p(i)} h_p``.

Likelihood vectors and LLR frames are plain ndarrays: the tuple axis (length
2^P) or user axis (length P) is always last, so every function broadcasts
over arbitrary leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .channel import NoiseModel, as_complex
from .errors import ConfigurationError, UnsupportedConfigurationError

LLR_MAX = 40.0
MAX_USERS = 3

__all__ = [
    "LLR_MAX",
    "SuperpositionTable",
    "bit_table",
    "superposition_levels",
    "build_table",
    "tuple_app",
    "bit_llrs",
    "hard_decide",
    "log_likelihoods",
    "mldt_llrs",
    "log_bit_llrs",
    "bits_to_index",
]


def _check_users(p: int) -> int:
    if p not in (1, 2, 3):
        raise UnsupportedConfigurationError(f"MLDT supports 1 <= P <= {MAX_USERS} users, got {p}")
    return p


@lru_cache(maxsize=None)
def bit_table(p: int) -> np.ndarray:
    """``(2^P, P)`` array whose row ``i`` holds the bits of tuple index ``i`` (user A first)."""
    _check_users(p)
    idx = np.arange(2**p)
    table = (idx[:, None] >> np.arange(p - 1, -1, -1)[None, :]) & 1
    table.setflags(write=False)
    return table


def bits_to_index(bits) -> np.ndarray:
    """Pack per-user bits (user axis last) into tuple indices."""
    b = np.asarray(bits, dtype=np.int64)
    p = b.shape[-1]
    weights = 1 << np.arange(p - 1, -1, -1)
    return b @ weights


def superposition_levels(gains) -> np.ndarray:
    """Levels ``S(i)`` for gains of shape ``(..., P)``; returns ``(..., 2^P)``."""
    h = as_complex(gains)
    p = _check_users(h.shape[-1])
    signs = 1 - 2 * bit_table(p)  # (Q, P)
    return np.einsum("...p,qp->...q", h, signs)


@dataclass(frozen=True, eq=False)
class SuperpositionTable:
    """The 2^P noiseless received levels for one set of known gains."""

    gains: np.ndarray
    levels: np.ndarray

    @property
    def p(self) -> int:
        return self.gains.shape[-1]

    def level(self, bits) -> complex:
        return complex(self.levels[int(bits_to_index(bits))])


def build_table(gains) -> SuperpositionTable:
    h = as_complex(gains)
    if h.ndim != 1:
        raise ConfigurationError("build_table expects a 1-D sequence of P gains")
    return SuperpositionTable(h, superposition_levels(h))


def _levels_of(table) -> np.ndarray:
    return table.levels if isinstance(table, SuperpositionTable) else as_complex(table)


def _sigma2_of(noise) -> float:
    s2 = noise.sigma2 if isinstance(noise, NoiseModel) else noise
    s2 = np.asarray(s2, dtype=float)
    if np.any(~np.isfinite(s2)) or np.any(s2 <= 0):
        raise ConfigurationError(f"noise variance per dimension must be > 0, got {noise}")
    return s2


def log_likelihoods(r, table, noise, prior=None) -> np.ndarray:
    """Unnormalised log posteriors ``log prior_i - |r - S(i)|^2 / (2 sigma^2)``.

    ``r`` has shape ``(...)``; levels ``(..., Q)``; ``noise`` is a NoiseModel
    or the per-dimension variance (scalar or broadcastable to ``r``).
    """
    levels = _levels_of(table)
    s2 = _sigma2_of(noise)
    r = np.asarray(r, dtype=complex)
    d = r[..., None] - levels
    ll = -(d.real**2 + d.imag**2) / (2.0 * np.asarray(s2)[..., None])
    if prior is not None:
        with np.errstate(divide="ignore"):
            ll = ll + np.log(np.asarray(prior, dtype=float))
    return ll


def tuple_app(r, table, noise, prior=None) -> np.ndarray:
    """A posteriori probabilities of the 2^P tuples given the received sample(s)."""
    ll = log_likelihoods(r, table, noise, prior)
    ll = ll - ll.max(axis=-1, keepdims=True)
    p = np.exp(ll)
    return p / p.sum(axis=-1, keepdims=True)


def _partition_llrs(values, q: int, log_domain: bool) -> np.ndarray:
    p = _check_users(int(np.log2(q)))
    bits = bit_table(p)
    out = np.empty(values.shape[:-1] + (p,))
    with np.errstate(divide="ignore", invalid="ignore"):
        for u in range(p):
            zero = values[..., bits[:, u] == 0]
            one = values[..., bits[:, u] == 1]
            if log_domain:
                out[..., u] = logsumexp(zero, axis=-1) - logsumexp(one, axis=-1)
            else:
                out[..., u] = np.log(zero.sum(axis=-1)) - np.log(one.sum(axis=-1))
    out = np.nan_to_num(out, nan=0.0, posinf=LLR_MAX, neginf=-LLR_MAX)
    return np.clip(out, -LLR_MAX, LLR_MAX)


def bit_llrs(probs) -> np.ndarray:
    """Per-user LLRs ``ln P(bit=0)/P(bit=1)`` from tuple probabilities, clamped to +-LLR_MAX."""
    probs = np.asarray(probs, dtype=float)
    return _partition_llrs(probs, probs.shape[-1], log_domain=False)


def log_bit_llrs(log_post) -> np.ndarray:
    """Per-user LLRs from unnormalised tuple log-posteriors, clamped to +-LLR_MAX."""
    ll = np.asarray(log_post, dtype=float)
    return _partition_llrs(ll, ll.shape[-1], log_domain=True)


def mldt_llrs(r, table, noise, prior=None) -> np.ndarray:
    """Detector output LLRs computed entirely in the log domain (no underflow)."""
    return log_bit_llrs(log_likelihoods(r, table, noise, prior))


def hard_decide(llrs) -> np.ndarray:
    """Bit 0 where LLR >= 0, else 1."""
    return (np.asarray(llrs) < 0).astype(np.uint8)
