"""Quasi-static Rayleigh fading, multipath taps and complex AWGN.

All random draws take an explicit ``numpy.random.Generator`` so that trials
can own independent substreams.  Gains are normalised so that
``E[|h|^2] = mean_square`` (unit power per user by default); for an
``L``-path profile the unit power is split evenly across the paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "ChannelGain",
    "NoiseModel",
    "FadingProfile",
    "draw_rayleigh_gain",
    "draw_rayleigh",
    "draw_taps",
    "quasi_static_gains",
    "add_awgn",
    "apply_multipath",
]


@dataclass(frozen=True)
class ChannelGain:
    """Complex channel gain ``h = |h| exp(j theta)``."""

    re: float
    im: float

    @classmethod
    def from_complex(cls, h: complex) -> "ChannelGain":
        return cls(float(np.real(h)), float(np.imag(h)))

    def amplitude(self) -> float:
        return math.hypot(self.re, self.im)

    def phase(self) -> float:
        """Phase in ``[0, 2 pi)``."""
        return math.atan2(self.im, self.re) % (2 * math.pi)

    def __complex__(self) -> complex:
        return complex(self.re, self.im)


def as_complex(gains) -> np.ndarray:
    """ChannelGain, nested sequences of them, or numbers -> complex ndarray."""
    return np.asarray(gains, dtype=complex)


@dataclass(frozen=True)
class NoiseModel:
    """Complex AWGN with spectral density ``n0`` (variance ``n0/2`` per dimension)."""

    n0: float

    def __post_init__(self):
        if not np.isfinite(self.n0) or self.n0 <= 0:
            raise ConfigurationError(f"noise density n0 must be finite and > 0, got {self.n0}")

    @property
    def sigma2(self) -> float:
        return self.n0 / 2.0

    @classmethod
    def from_snr_db(cls, snr_db: float, signal_energy: float = 1.0) -> "NoiseModel":
        """Noise giving ``signal_energy / n0`` equal to ``snr_db``."""
        return cls(signal_energy / 10.0 ** (snr_db / 10.0))


@dataclass(frozen=True)
class FadingProfile:
    num_paths: int = 1
    powers: tuple[float, ...] = field(default=())
    block_length: int = 1

    def __post_init__(self):
        if self.num_paths < 1:
            raise ConfigurationError("num_paths must be >= 1")
        if self.block_length < 1:
            raise ConfigurationError("block_length must be >= 1")
        if not self.powers:
            object.__setattr__(self, "powers", (1.0 / self.num_paths,) * self.num_paths)
        if len(self.powers) != self.num_paths:
            raise ConfigurationError("powers must have one entry per path")
        if any(p < 0 or not np.isfinite(p) for p in self.powers):
            raise ConfigurationError("path powers must be finite and >= 0")

    @classmethod
    def equal_power(cls, num_paths: int, unit_power: float = 1.0, block_length: int = 1):
        return cls(num_paths, (unit_power / num_paths,) * num_paths, block_length)

    @property
    def total_power(self) -> float:
        return float(sum(self.powers))


def _check_mean_square(mean_square):
    ms = np.asarray(mean_square, dtype=float)
    if not np.all(np.isfinite(ms)) or np.any(ms <= 0):
        raise ConfigurationError(f"mean_square must be finite and > 0, got {mean_square}")
    return ms


def draw_rayleigh(rng: np.random.Generator, mean_square=1.0, size=None) -> np.ndarray:
    """Complex Gaussian gains with i.i.d. real/imaginary parts of variance mean_square/2."""
    ms = _check_mean_square(mean_square)
    scale = np.sqrt(ms / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def draw_rayleigh_gain(rng: np.random.Generator, mean_square: float = 1.0) -> ChannelGain:
    return ChannelGain.from_complex(complex(draw_rayleigh(rng, mean_square)))


def draw_taps(rng: np.random.Generator, profile: FadingProfile, size=()) -> np.ndarray:
    """Independent Rayleigh taps, shape ``size + (L,)``."""
    size = (size,) if np.isscalar(size) else tuple(size)
    powers = np.asarray(profile.powers, dtype=float)
    z = rng.standard_normal(size + (profile.num_paths, 2))
    return np.sqrt(powers / 2.0) * (z[..., 0] + 1j * z[..., 1])


def quasi_static_gains(rng, num_symbols: int, block_length: int, mean_square=1.0, users: int = 1):
    """Per-symbol gains of shape ``(num_symbols, users)``, constant inside each block."""
    if block_length < 1:
        raise ConfigurationError("block_length must be >= 1")
    blocks = -(-num_symbols // block_length)
    h = draw_rayleigh(rng, mean_square, (blocks, users))
    return np.repeat(h, block_length, axis=0)[:num_symbols]


def add_awgn(frame, noise: NoiseModel | None, rng: np.random.Generator) -> np.ndarray:
    """Return ``frame + w`` with complex Gaussian ``w``; ``noise=None`` disables it."""
    x = np.asarray(frame, dtype=complex)
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("frame contains non-finite samples")
    if noise is None or x.size == 0:
        return x.copy()
    sd = math.sqrt(noise.sigma2)
    return x + sd * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))


def apply_multipath(chips, taps) -> np.ndarray:
    """Chip-spaced multipath: full linear convolution along the last axis.

    ``chips`` has shape ``(..., J)`` and ``taps`` ``(..., L)`` (broadcast over
    the leading axes); the output has ``J + L - 1`` samples.
    """
    x = np.asarray(chips)
    h = as_complex(taps)
    if h.ndim == 0:
        h = h[None]
    L = h.shape[-1]
    if L == 0:
        raise ConfigurationError("multipath channel needs at least one tap")
    J = x.shape[-1]
    lead = np.broadcast_shapes(x.shape[:-1], h.shape[:-1])
    out = np.zeros(lead + (J + L - 1,), dtype=complex)
    for ell in range(L):
        out[..., ell:ell + J] += h[..., ell:ell + 1] * x
    return out
