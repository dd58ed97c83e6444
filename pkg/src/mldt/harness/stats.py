"""Counters, binomial confidence intervals and BER-curve interpolation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta


@dataclass
class Counts:
    bits: int = 0
    errors: int = 0
    frames: int = 0
    frame_errors: int = 0
    symbols: int = 0
    delivered: int = 0

    def __iadd__(self, other: "Counts") -> "Counts":
        self.bits += other.bits
        self.errors += other.errors
        self.frames += other.frames
        self.frame_errors += other.frame_errors
        self.symbols += other.symbols
        self.delivered += other.delivered
        return self


def clopper_pearson(errors: int, trials: int, level: float = 0.99) -> tuple[float, float]:
    """Exact binomial confidence interval for ``errors / trials``."""
    if trials <= 0:
        return 0.0, 1.0
    a = 1.0 - level
    lo = 0.0 if errors == 0 else float(beta.ppf(a / 2, errors, trials - errors + 1))
    hi = 1.0 if errors == trials else float(beta.ppf(1 - a / 2, errors + 1, trials - errors))
    return lo, hi


def crossing_snr(snr_db, ber, target: float) -> float | None:
    """SNR where a decreasing BER curve first falls to ``target``.

    Interpolates linearly in (dB, log10 BER) between the bracketing points;
    ``None`` if the grid does not bracket the target.
    """
    s = np.asarray(snr_db, dtype=float)
    b = np.asarray(ber, dtype=float)
    for i in range(1, s.size):
        if b[i - 1] > target >= b[i]:
            if b[i] <= 0:
                return float(s[i])
            y0, y1 = math.log10(b[i - 1]), math.log10(b[i])
            return float(s[i - 1] + (math.log10(target) - y0) * (s[i] - s[i - 1]) / (y1 - y0))
    return None
