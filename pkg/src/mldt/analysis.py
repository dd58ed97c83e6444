"""Closed-form BER bounds for uncoded MLDT and Monte Carlo capacity estimates.

``gamma_bar`` is the average per-user SNR ``E[|h|^2]/N0``.  For BPSK over
Rayleigh fading the average BER is ``g(gamma) = (1 - sqrt(gamma/(1+gamma)))/2``;
the MLDT bounds are sums of ``g`` evaluated at multiples of ``gamma_bar``
because sums/differences of independent unit gains are Rayleigh with twice
(or three times) the power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, logsumexp

from .channel import draw_rayleigh
from .errors import ConfigurationError, UnsupportedConfigurationError

CAPACITY_MODES = ("two_user_bpsk_rayleigh", "qpsk_rayleigh", "qpsk_awgn", "bpsk_awgn")
MIN_CAPACITY_SAMPLES = 10_000


def db_to_lin(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class SnrPoint:
    gamma_bar: float

    def __post_init__(self):
        if not (np.isfinite(self.gamma_bar) and self.gamma_bar > 0):
            raise ConfigurationError(f"gamma_bar must be > 0, got {self.gamma_bar}")

    @classmethod
    def from_db(cls, db: float) -> "SnrPoint":
        return cls(float(db_to_lin(db)))

    @property
    def db(self) -> float:
        return float(lin_to_db(self.gamma_bar))


def _gamma(snr):
    if isinstance(snr, SnrPoint):
        return snr.gamma_bar
    g = np.asarray(snr, dtype=float)
    if np.any(~(g > 0)):
        raise ConfigurationError("gamma_bar must be > 0")
    return g if g.ndim else float(g)


def qfunc(x):
    """Gaussian tail ``Q(x) = erfc(x / sqrt 2) / 2``."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def _g(gamma):
    # 1 - sqrt(x/(1+x)) == 1 / ((1+x) (1 + sqrt(x/(1+x)))), no cancellation at high SNR
    s = np.sqrt(gamma / (1.0 + gamma))
    return 0.5 / ((1.0 + gamma) * (1.0 + s))


def ber_exact_p1(snr):
    """Average BPSK BER over Rayleigh fading; also the lower bound for P = 2, 3."""
    return _g(_gamma(snr))


ber_lower = ber_exact_p1


def ber_upper_p2(snr):
    g = _gamma(snr)
    return _g(g) + _g(2 * g)


def ber_upper_p3(snr):
    g = _gamma(snr)
    return _g(g) + 2 * _g(2 * g) + _g(3 * g)


def ber_upper(p_users: int, snr):
    """Upper bound (exact value for P = 1) for ``p_users`` collided users."""
    try:
        fn = {1: ber_exact_p1, 2: ber_upper_p2, 3: ber_upper_p3}[p_users]
    except KeyError:
        raise UnsupportedConfigurationError(f"bounds exist for P in 1..3, got {p_users}") from None
    return fn(snr)


_HIGH_SNR_COEFF = {1: 1 / 4, 2: 3 / 8, 3: 7 / 12}


def ber_highsnr_approx(p_users: int, snr):
    """High-SNR asymptote ``c_P / gamma_bar`` with c = 1/4, 3/8, 7/12."""
    if p_users not in _HIGH_SNR_COEFF:
        raise UnsupportedConfigurationError(f"approximation exists for P in 1..3, got {p_users}")
    return _HIGH_SNR_COEFF[p_users] / _gamma(snr)


@dataclass(frozen=True)
class CapacityEstimate:
    bits_per_channel_use: float
    std_error: float
    num_samples: int


def _capacity_gains(mode: str, es: float, rng, n: int):
    """Gains (h_A, h_B) with total average received energy ``es`` (N0 = 1)."""
    if mode == "two_user_bpsk_rayleigh":
        return draw_rayleigh(rng, es / 2, n), draw_rayleigh(rng, es / 2, n)
    if mode == "qpsk_rayleigh":
        # |h_A| = |h_B| with relative phase pi/2
        h = draw_rayleigh(rng, es / 2, n)
        return h, 1j * h
    if mode == "qpsk_awgn":
        a = math.sqrt(es / 2)
        return np.full(n, a, complex), np.full(n, 1j * a)
    if mode == "bpsk_awgn":
        # user A alone at its per-user share; B silent
        return np.full(n, math.sqrt(es / 2), complex), np.zeros(n, complex)
    raise ConfigurationError(f"unknown capacity mode {mode!r}; expected one of {CAPACITY_MODES}")


def capacity_samples(mode: str, es_n0_db: float, n: int, rng) -> np.ndarray:
    """Per-sample values of ``log2 f(x) / (1/4 sum_x' f(x'))`` (bits)."""
    if not np.isfinite(es_n0_db):
        raise ConfigurationError("es_n0_db must be finite")
    es = float(db_to_lin(es_n0_db))
    h_a, h_b = _capacity_gains(mode, es, rng, n)
    levels = np.stack([h_a + h_b, h_a - h_b, -h_a + h_b, -h_a - h_b], axis=-1)
    sent = rng.integers(0, 4, n)
    sigma2 = 0.5
    w = math.sqrt(sigma2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    r = levels[np.arange(n), sent] + w
    d = r[:, None] - levels
    metric = -(d.real**2 + d.imag**2) / (2 * sigma2)
    own = metric[np.arange(n), sent]
    return (math.log(4.0) - logsumexp(metric - own[:, None], axis=-1)) / math.log(2.0)


def estimate_capacity(mode: str, es_n0_db: float, samples: int, rng, chunk: int = 200_000) -> CapacityEstimate:
    """Monte Carlo average mutual information (bits per channel use).

    ``es_n0_db`` is the average received superposition energy over N0; each
    of the two BPSK users carries half of it.  ``bpsk_awgn`` is the same
    superchannel with user B switched off, so its single user sees Es/2.
    """
    if mode not in CAPACITY_MODES:
        raise ConfigurationError(f"unknown capacity mode {mode!r}; expected one of {CAPACITY_MODES}")
    if samples < MIN_CAPACITY_SAMPLES:
        raise ConfigurationError(f"need at least {MIN_CAPACITY_SAMPLES} samples, got {samples}")
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        v = capacity_samples(mode, es_n0_db, n, rng)
        total += float(v.sum())
        total_sq += float(np.dot(v, v))
        done += n
    mean = total / samples
    var = max(total_sq / samples - mean**2, 0.0) * samples / (samples - 1)
    return CapacityEstimate(mean, math.sqrt(var / samples), samples)
