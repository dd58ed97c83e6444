"""MC-DS-CDMA: per-subcarrier spreading, OFDM with cyclic prefix, MLDT and inter-SPA.

Bit ``b^n`` of user ``(k, p)`` on subcarrier ``n`` is spread in time by
``s_k``: chip ``j`` of every subcarrier forms one OFDM symbol, so a block of
J OFDM symbols carries one bit per subcarrier per user.  The transform pair
is unitary, hence a chip-spaced channel with taps ``h`` acts on subcarrier
``n`` as the multiplier ``H^n = sum_l h_l e^{-2 pi j n l / N}`` as long as
the cyclic prefix covers the channel memory.

Array layout: bits ``(..., K, P, N)``, taps ``(..., K, P, L)``, time samples
``(..., J, N + cp)`` per user and ``(..., J * (N + cp))`` after the channel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .channel import NoiseModel, add_awgn, apply_multipath, as_complex
from .detector import LLR_MAX, log_bit_llrs, log_likelihoods, mldt_llrs, superposition_levels, tuple_app
from .errors import ConfigurationError
from .ldpc import DecodeResult, ParityMatrix, spa_decode
from .spread import SignatureSet


class IsiWarning(UserWarning):
    """Cyclic prefix shorter than the channel memory."""


@dataclass(frozen=True, eq=False)
class OfdmFrame:
    n_sub: int
    J: int
    cp_len: int
    samples: np.ndarray  # (..., J, n_sub + cp_len)

    @property
    def symbol_length(self) -> int:
        return self.n_sub + self.cp_len

    def serial(self) -> np.ndarray:
        return self.samples.reshape(self.samples.shape[:-2] + (self.J * self.symbol_length,))


def mcds_modulate(bits, signatures: SignatureSet, cp_len: int = 4) -> OfdmFrame:
    """Spread, inverse-transform each chip's subcarrier vector, prepend the CP."""
    b = np.asarray(bits)
    if b.ndim < 3:
        raise ConfigurationError("bits must have shape (..., K, P, N)")
    K = b.shape[-3]
    if K > signatures.K:
        raise ConfigurationError(f"{K} signature groups requested, only {signatures.K} sequences")
    if cp_len < 0:
        raise ConfigurationError("cp_len must be >= 0")
    N = b.shape[-1]
    x = 1.0 - 2.0 * b.astype(float)
    s = signatures.sequences[:K].astype(float)  # (K, J)
    X = x[..., None, :] * s[:, None, :, None]  # (..., K, P, J, N)
    t = np.fft.ifft(X, axis=-1, norm="ortho")
    if cp_len:
        t = np.concatenate([t[..., N - cp_len :], t], axis=-1)
    return OfdmFrame(N, signatures.J, cp_len, t)


def mcds_channel(frame: OfdmFrame, taps, noise: NoiseModel | None, rng: np.random.Generator) -> np.ndarray:
    """Per-user chip-spaced multipath, superposition over users, AWGN.

    The J OFDM symbols are sent back to back; the tail of the convolution
    past the block is discarded.  A prefix shorter than ``L - 1`` only
    triggers an IsiWarning.
    """
    h = as_complex(taps)
    L = h.shape[-1]
    if frame.cp_len < L - 1:
        warnings.warn(f"cyclic prefix {frame.cp_len} < L - 1 = {L - 1}: intersymbol interference", IsiWarning, stacklevel=2)
    serial = frame.serial()
    if h.shape[:-1] != serial.shape[:-1]:
        raise ConfigurationError("taps must have shape (..., K, P, L) matching the frame's user axes")
    y = apply_multipath(serial, h)[..., : serial.shape[-1]].sum(axis=(-3, -2))
    return add_awgn(y, noise, rng)


def demodulate(received, n_sub: int, J: int, cp_len: int) -> np.ndarray:
    """Strip the CP and transform back: ``R^n(j)`` with shape ``(..., J, N)``."""
    r = np.asarray(received)
    sym = n_sub + cp_len
    if r.shape[-1] != J * sym:
        raise ConfigurationError(f"expected {J * sym} samples, got {r.shape[-1]}")
    blocks = r.reshape(r.shape[:-1] + (J, sym))[..., cp_len:]
    return np.fft.fft(blocks, axis=-1, norm="ortho")


def frequency_response(taps, n_sub: int) -> np.ndarray:
    """``H^n``: N-point DFT (unnormalised) of the zero-padded taps, last axis."""
    h = as_complex(taps)
    if h.shape[-1] > n_sub:
        raise ConfigurationError("more taps than subcarriers")
    return np.fft.fft(h, n_sub, axis=-1)


def despread(R, signatures: SignatureSet, K: int | None = None) -> np.ndarray:
    """``R^n_k = (1/J) sum_j R^n(j) s_k(j)``; returns ``(..., K, N)``."""
    K = signatures.K if K is None else K
    return np.einsum("...jn,kj->...kn", np.asarray(R), signatures.sequences[:K]) / signatures.J


class MldtOutput(NamedTuple):
    despread: np.ndarray  # (..., K, N)
    levels: np.ndarray  # (..., K, N, Q)
    llrs: np.ndarray  # (..., K, N, P)
    probs: np.ndarray  # (..., K, N, Q)


def mcds_despread_detect(R, signatures: SignatureSet, H, noise: NoiseModel) -> MldtOutput:
    """Despread every subcarrier and run MLDT with gains ``H^n_{k,p}``; ``H`` is ``(..., K, P, N)``.

    Noise variance after despreading is ``sigma^2 / J``.
    """
    Hc = as_complex(H)
    K = Hc.shape[-3]
    d = despread(R, signatures, K)
    levels = superposition_levels(np.swapaxes(Hc, -1, -2))  # (..., K, N, Q)
    s2 = noise.sigma2 / signatures.J
    return MldtOutput(d, levels, mldt_llrs(d, levels, s2), tuple_app(d, levels, s2))


def recompute_llrs(r, levels, sigma2, llr_known, known_user: int) -> np.ndarray:
    """Two-user MLDT LLR of the other user given soft knowledge of ``known_user``.

    The tuple prior is ``P(b_known)`` from ``llr_known`` (uniform in the
    other bit); the returned LLR belongs to user ``1 - known_user``.
    """
    if known_user not in (0, 1):
        raise ConfigurationError("known_user must be 0 (A) or 1 (B)")
    l = np.clip(np.asarray(llr_known, dtype=float), -LLR_MAX, LLR_MAX)
    one = expit(-l)  # P(b = 1)
    zero = expit(l)
    if known_user == 0:  # tuple order (b_A, b_B): 00, 01, 10, 11
        prior = np.stack([zero, zero, one, one], axis=-1)
    else:
        prior = np.stack([zero, one, zero, one], axis=-1)
    with np.errstate(divide="ignore"):
        logp = log_likelihoods(r, levels, sigma2) + np.log(prior)
    return log_bit_llrs(logp)[..., 1 - known_user]


def inter_spa_decode(
    r,
    levels,
    sigma2,
    H: ParityMatrix,
    rounds: int = 2,
    max_iter: int = 10,
    feedback: str = "posterior",
    early_exit: bool = True,
) -> tuple[DecodeResult, DecodeResult]:
    """Alternate SPA decoding of users A and B, re-priming MLDT with the other user's LLRs.

    ``r`` and ``levels`` hold despread samples ``(..., n)`` and two-user
    levels ``(..., n, 4)`` for one codeword of each user.  A round decodes A,
    recomputes B's channel LLRs, decodes B and recomputes A's for the next
    round.  ``feedback`` selects the decoder LLRs used as prior: the full
    posterior or only the extrinsic part.
    """
    if rounds < 1:
        raise ConfigurationError("rounds must be >= 1")
    if feedback not in ("posterior", "extrinsic"):
        raise ConfigurationError("feedback must be 'posterior' or 'extrinsic'")
    base = mldt_llrs(r, levels, sigma2)
    ch_a, ch_b = base[..., 0], base[..., 1]
    res_a = res_b = None
    for _ in range(rounds):
        res_a = spa_decode(ch_a, H, max_iter, early_exit)
        fb_a = res_a.llrs - (ch_a if feedback == "extrinsic" else 0.0)
        ch_b = recompute_llrs(r, levels, sigma2, fb_a, 0)
        res_b = spa_decode(ch_b, H, max_iter, early_exit)
        fb_b = res_b.llrs - (ch_b if feedback == "extrinsic" else 0.0)
        ch_a = recompute_llrs(r, levels, sigma2, fb_b, 1)
    return res_a, res_b
