"""DS-CDMA with collided users: signatures, chip-level multipath and per-path MLDT.

K signature groups each carry P collided users that share signature
``s_k``.  Bits of user ``(k, p)`` are spread to ``x(j) = (-1)^b s_k(j)``
(unit chip energy), sent over an L-path chip-spaced channel and despread by
a correlator per path.  Each path output is detected with MLDT and the
per-path LLRs are combined with weights proportional to path power.

Array layout: bits ``(..., K, P)``, gains ``(..., K, P, L)``, received
chips ``(..., J + L - 1)``; leading axes index independent trials.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import hadamard

from .channel import NoiseModel, add_awgn, apply_multipath, as_complex
from .detector import mldt_llrs, superposition_levels
from .errors import ConfigurationError

# feedback taps of x^m + x^t + 1, all primitive
_PRIMITIVE_TAPS = {3: 1, 4: 1, 5: 2, 6: 1}
WEIGHTINGS = ("average", "per_user")


@dataclass(frozen=True, eq=False)
class SignatureSet:
    kind: str
    sequences: np.ndarray  # (K, J) of +-1

    @property
    def K(self) -> int:
        return self.sequences.shape[0]

    @property
    def J(self) -> int:
        return self.sequences.shape[1]

    def to_csv(self, path) -> None:
        np.savetxt(Path(path), self.sequences, fmt="%d", delimiter=",")

    @classmethod
    def from_csv(cls, path, kind: str = "custom") -> "SignatureSet":
        seq = np.loadtxt(Path(path), delimiter=",", dtype=np.int64, ndmin=2)
        if not np.all(np.abs(seq) == 1):
            raise ConfigurationError("signature entries must be +1 or -1")
        return cls(kind, seq)

    def subset(self, K: int) -> "SignatureSet":
        if not 1 <= K <= self.K:
            raise ConfigurationError(f"K must be in 1..{self.K}")
        return SignatureSet(self.kind, self.sequences[:K])


def gen_hadamard(J: int) -> SignatureSet:
    """Sylvester Hadamard-Walsh rows, K = J."""
    if J < 2 or J > 64 or J & (J - 1):
        raise ConfigurationError(f"Hadamard length must be a power of two in 2..64, got {J}")
    return SignatureSet("hadamard", hadamard(J).astype(np.int64))


def msequence_bits(m: int) -> np.ndarray:
    """One period of the LFSR sequence ``a[n+m] = a[n+t] ^ a[n]`` from the all-ones state."""
    if m not in _PRIMITIVE_TAPS:
        raise ConfigurationError(f"m-sequence degree must be one of {sorted(_PRIMITIVE_TAPS)}, got {m}")
    t = _PRIMITIVE_TAPS[m]
    J = 2**m - 1
    a = np.ones(J + m, dtype=np.int64)
    for n in range(J):
        a[n + m] = a[n + t] ^ a[n]
    return a[:J]


def gen_msequence(m: int = 4) -> SignatureSet:
    """All J = 2^m - 1 cyclic shifts of one m-sequence, mapped 0 -> +1, 1 -> -1."""
    base = 1 - 2 * msequence_bits(m)
    rows = np.stack([np.roll(base, -k) for k in range(base.size)])
    return SignatureSet("msequence", rows)


def _modulate(bits) -> np.ndarray:
    return 1.0 - 2.0 * np.asarray(bits, dtype=float)


def cdma_transmit(
    bits,
    signatures: SignatureSet,
    gains,
    noise: NoiseModel | None,
    rng: np.random.Generator,
    edge_bits=None,
) -> np.ndarray:
    """Received chips ``r(j), j = 1..J+L-1`` for one bit interval.

    Chips outside the interval come from the previous and next bit of the
    same user; ``edge_bits = (prev, next)`` fixes them, otherwise they are
    drawn uniformly from ``rng``.
    """
    b = np.asarray(bits)
    h = as_complex(gains)
    if b.ndim < 2 or h.ndim != b.ndim + 1 or h.shape[:-1] != b.shape:
        raise ConfigurationError("gains must have shape bits.shape + (L,)")
    K, P = b.shape[-2:]
    L = h.shape[-1]
    J = signatures.J
    if K > signatures.K:
        raise ConfigurationError(f"{K} signature groups requested, only {signatures.K} sequences")
    if L < 1 or L - 1 > J:
        raise ConfigurationError("need 1 <= L <= J + 1")
    if edge_bits is None:
        prev = rng.integers(0, 2, b.shape)
        nxt = rng.integers(0, 2, b.shape)
    else:
        prev, nxt = (np.broadcast_to(np.asarray(e), b.shape) for e in edge_bits)
    s = signatures.sequences[:K][:, None, :].astype(float)  # (K, 1, J)
    stream = np.concatenate(
        [_modulate(prev)[..., None] * s, _modulate(b)[..., None] * s, _modulate(nxt)[..., None] * s], axis=-1
    )
    y = apply_multipath(stream, h).sum(axis=(-3, -2))
    return add_awgn(y[..., J : 2 * J + L - 1], noise, rng)


def correlate(received, signatures: SignatureSet, k: int, shift: int) -> np.ndarray:
    """``(1/J) sum_j r(j + shift) s_k(j)``; ``received`` has chips on the last axis."""
    r = np.asarray(received)
    J = signatures.J
    if not 0 <= k < signatures.K:
        raise ConfigurationError(f"signature index {k} out of range")
    if shift < 0 or shift + J > r.shape[-1]:
        raise ConfigurationError(f"shift {shift} out of range for {r.shape[-1]} received chips")
    return r[..., shift : shift + J] @ signatures.sequences[k] / J


def correlator_bank(received, signatures: SignatureSet, K: int, L: int) -> np.ndarray:
    """All correlator outputs, shape ``(..., K, L)``."""
    r = np.asarray(received)
    J = signatures.J
    if r.shape[-1] < J + L - 1:
        raise ConfigurationError("received frame shorter than J + L - 1")
    windows = np.stack([r[..., l : l + J] for l in range(L)], axis=-2)  # (..., L, J)
    return np.einsum("...lj,kj->...kl", windows, signatures.sequences[:K]) / J


def combining_weights(gains, weighting: str = "average") -> np.ndarray:
    """Path weights ``|h_l|^2 / sum_l |h_l|^2`` from gains ``(..., P, L)``.

    Returns ``(..., L)`` for ``average`` (mean of the users' weights) or
    ``(..., P, L)`` for ``per_user``.
    """
    h = as_complex(gains)
    pw = np.abs(h) ** 2
    tot = pw.sum(axis=-1, keepdims=True)
    if np.any(tot <= 0):
        raise ConfigurationError("combining weights undefined: all path gains are zero")
    alpha = pw / tot
    if weighting == "average":
        return alpha.mean(axis=-2)
    if weighting == "per_user":
        return alpha
    raise ConfigurationError(f"weighting must be one of {WEIGHTINGS}, got {weighting!r}")


def combine_llrs(per_path, gains, weighting: str = "average") -> np.ndarray:
    """Weighted sum over paths of per-path LLRs ``(..., L, P)``; gains ``(..., P, L)``.

    A 1-D ``gains`` is read as the path gains of a single user.
    """
    e = np.asarray(per_path, dtype=float)
    h = as_complex(gains)
    if h.ndim == 1:
        h = h[None, :]
    alpha = combining_weights(h, weighting)
    if weighting == "per_user":
        return np.einsum("...pl,...lp->...p", alpha, e)
    return np.einsum("...l,...lp->...p", alpha, e)


def path_llrs(corr, gains, sigma2) -> np.ndarray:
    """Per-path MLDT LLRs ``(..., K, L, P)`` from correlator outputs ``(..., K, L)``."""
    h = as_complex(gains)  # (..., K, P, L)
    levels = superposition_levels(np.swapaxes(h, -1, -2))  # (..., K, L, Q)
    return mldt_llrs(corr, levels, sigma2)


def cdma_detect(received, signatures: SignatureSet, gains, noise: NoiseModel, weighting: str = "average"):
    """Combined per-user LLRs ``(..., K, P)``; despread noise variance is ``sigma^2 / J``."""
    h = as_complex(gains)
    K, L = h.shape[-3], h.shape[-1]
    corr = correlator_bank(received, signatures, K, L)
    e = path_llrs(corr, h, noise.sigma2 / signatures.J)
    return combine_llrs(e, h, weighting)
