"""Small statistical helpers shared by the campaigns and the test-suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

MIN_KS_SAMPLES = 1000
Z95 = 1.959963984540054


def wilson(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    # exact endpoints at the boundary counts; the formula leaves rounding residue
    lo = 0.0 if k == 0 else max(0.0, mid - half)
    hi = 1.0 if k == n else min(1.0, mid + half)
    return lo, hi


def binomial_se(k: int, n: int) -> float:
    p = k / n
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def _check_size(*samples) -> None:
    for s in samples:
        if len(s) < MIN_KS_SAMPLES:
            raise ValueError(f"KS tests need at least {MIN_KS_SAMPLES} samples, got {len(s)}")


def ks_gamma(sample, shape: float, scale: float) -> float:
    """Asymptotic one-sample KS p-value against Gamma(shape, scale)."""
    _check_size(sample)
    return float(stats.kstest(sample, stats.gamma(shape, scale=scale).cdf, method="asymp").pvalue)


def ks_1samp(sample, cdf) -> float:
    _check_size(sample)
    return float(stats.kstest(sample, cdf, method="asymp").pvalue)


def ks_2samp(a, b) -> float:
    _check_size(a, b)
    return float(stats.ks_2samp(a, b, method="asymp").pvalue)


def z_pvalue(estimate: float, target: float, se: float, slack: float = 0.0) -> float:
    """Two-sided normal p-value of ``|estimate - target|`` beyond an allowed ``slack``."""
    excess = max(abs(estimate - target) - slack, 0.0)
    if se <= 0:
        return 1.0 if excess == 0 else 0.0
    return float(2 * stats.norm.sf(excess / se))


def within_sigma(estimate: float, target: float, se: float, k: float = 3.0, slack: float = 0.0) -> bool:
    return abs(estimate - target) <= k * se + slack


def covariance_se(a, b) -> tuple[float, float]:
    """Sample covariance and its delta-method standard error."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = len(a)
    prod = (a - a.mean()) * (b - b.mean())
    return float(prod.sum() / (n - 1)), float(prod.std(ddof=1) / math.sqrt(n))


def bonferroni(level: float, count: int) -> float:
    return level / max(count, 1)


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    ci: tuple[float, float]
    used: int


def loglog_fit(x, k, n) -> SlopeFit:
    """Weighted least squares of ``log(k/n)`` on ``log x``.

    Weights are inverse delta-method variances ``(1 - p) / (n p)``; cells with
    ``k = 0`` are dropped.  With exact power-law proportions the fit is exact
    regardless of the weights.
    """
    x = np.asarray(x, dtype=float)
    k = np.asarray(k, dtype=float)
    n = np.broadcast_to(np.asarray(n, dtype=float), x.shape)
    keep = k > 0
    if keep.sum() < 2:
        raise ValueError("need at least two non-empty cells to fit a slope")
    lx = np.log(x[keep])
    p = k[keep] / n[keep]
    ly = np.log(p)
    var = np.maximum((1 - p) / (n[keep] * p), 1e-300)
    w = 1 / var
    W = w.sum()
    mx = (w * lx).sum() / W
    my = (w * ly).sum() / W
    sxx = (w * (lx - mx) ** 2).sum()
    slope = (w * (lx - mx) * (ly - my)).sum() / sxx
    intercept = my - slope * mx
    se = math.sqrt(1 / sxx)
    return SlopeFit(float(slope), float(intercept), se, (float(slope - Z95 * se), float(slope + Z95 * se)), int(keep.sum()))
