"""Goodness-of-fit and binomial interval helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from remlab.errors import DomainError

Z95 = 1.959963984540054


def ks_distance(sample, sigma2: float) -> float:
    """Two-sided Kolmogorov-Smirnov distance between the ECDF and N(0, sigma2)."""
    x = np.sort(np.asarray(sample, dtype=np.float64).ravel())
    n = x.size
    if n == 0:
        raise DomainError("KS distance of an empty sample")
    if not (sigma2 > 0 and math.isfinite(sigma2)):
        raise DomainError(f"sigma2 must be positive, got {sigma2!r}")
    cdf = ndtr(x / math.sqrt(sigma2))
    i = np.arange(1, n + 1, dtype=np.float64)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def wilson_interval(hits: int, total: int, z: float = Z95) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if total < 1:
        raise DomainError(f"Wilson interval needs total >= 1, got {total!r}")
    if not 0 <= hits <= total:
        raise DomainError(f"need 0 <= hits <= total, got {hits!r}/{total!r}")
    p = hits / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (p + z2 / (2 * total)) / denom
    half = z * math.sqrt(p * (1.0 - p) / total + z2 / (4.0 * total * total)) / denom
    lo = 0.0 if hits == 0 else max(0.0, center - half)
    hi = 1.0 if hits == total else min(1.0, center + half)
    return min(lo, p), max(hi, p)


@dataclass(frozen=True)
class TailEstimate:
    """Hit count of an exceedance event and its normalized log-probability.

    ``norm_log_p`` is log(p_hat) / speed and is None when there are no hits.
    """

    threshold: float
    hits: int
    total: int
    p_hat: float
    wilson_lo: float
    wilson_hi: float
    speed: float
    norm_log_p: Optional[float]

    @property
    def defined(self) -> bool:
        return self.norm_log_p is not None

    def as_dict(self) -> dict:
        return {
            "threshold": self.threshold, "hits": self.hits, "total": self.total,
            "p_hat": self.p_hat, "wilson_lo": self.wilson_lo, "wilson_hi": self.wilson_hi,
            "speed": self.speed, "norm_log_p": self.norm_log_p,
        }


def tail_estimate(values, threshold: float, speed: float = 1.0, upper: bool = True) -> TailEstimate:
    """Estimate P(V > threshold) (or P(V < threshold) when ``upper`` is False)."""
    v = np.asarray(values, dtype=np.float64)
    total = int(v.size)
    if total == 0:
        raise DomainError("tail estimate of an empty sample")
    hits = int(np.count_nonzero(v > threshold if upper else v < threshold))
    lo, hi = wilson_interval(hits, total)
    p = hits / total
    norm = math.log(p) / speed if hits else None
    return TailEstimate(float(threshold), hits, total, p, lo, hi, float(speed), norm)


def intervals_overlap(a: tuple, b: tuple) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]
