"""Descriptive statistics for feature distributions and the harness tests.

The summary palette matches the estimation API: location (mean, median,
trimmed and winsorized means), dispersion (SD, SE, variance, range), and
t-based confidence intervals at 90/95/99%.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import chi2, t as t_dist

from .errors import InsufficientDataError

TRIM_FRACTION = 0.1  # discarded (or clamped) per tail
CI_LEVELS = (90, 95, 99)


@dataclass(frozen=True)
class FeatureEstimate:
    values: tuple[float, ...]
    mean: float
    median: float
    trimmed_mean: float
    winsorized_mean: float
    min: float
    max: float
    range: float
    standard_deviation: float
    standard_error: float
    variance: float
    confidence_intervals: dict[int, tuple[float, float]]

    def to_obj(self) -> dict:
        """The wire shape used by the estimation API (keys are frozen)."""
        return {
            "confidence_intervals": {
                f"{level}%": [lo, hi]
                for level, (lo, hi) in sorted(self.confidence_intervals.items())
            },
            "max": self.max,
            "mean": self.mean,
            "median": self.median,
            "min": self.min,
            "range": self.range,
            "standard_deviation": self.standard_deviation,
            "standard_error": self.standard_error,
            "trimmed_mean": self.trimmed_mean,
            "values": list(self.values),
            "variance": self.variance,
            "winsorized_mean": self.winsorized_mean,
        }


@dataclass(frozen=True)
class HistogramSpec:
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]


def _check_values(values: Sequence[float], minimum: int = 2) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or len(arr) < minimum:
        raise InsufficientDataError(f"need at least {minimum} values, got {len(arr)}")
    if not np.all(np.isfinite(arr)):
        raise InsufficientDataError("values must all be finite")
    return arr


def summarize(values: Sequence[float]) -> FeatureEstimate:
    """Full statistics palette over a sample (n >= 2, all finite)."""
    arr = _check_values(values)
    n = len(arr)
    srt = np.sort(arr)

    if srt[0] == srt[-1]:
        # Constant sample: every statistic degenerates to the value itself.
        v = float(srt[0])
        return FeatureEstimate(
            values=tuple(arr.tolist()), mean=v, median=v, trimmed_mean=v,
            winsorized_mean=v, min=v, max=v, range=0.0, standard_deviation=0.0,
            standard_error=0.0, variance=0.0,
            confidence_intervals={lvl: (v, v) for lvl in CI_LEVELS})

    k = int(math.floor(TRIM_FRACTION * n))
    trimmed = srt[k:n - k] if k else srt
    winsorized = srt.copy()
    if k:
        winsorized[:k] = srt[k]
        winsorized[n - k:] = srt[n - k - 1]

    mean = float(arr.mean())
    sd = float(arr.std(ddof=1))
    se = sd / math.sqrt(n)
    cis = {}
    for level in CI_LEVELS:
        alpha = 1.0 - level / 100.0
        half = float(t_dist.ppf(1.0 - alpha / 2.0, n - 1)) * se
        cis[level] = (mean - half, mean + half)

    return FeatureEstimate(
        values=tuple(arr.tolist()),
        mean=mean,
        median=float(np.median(srt)),
        trimmed_mean=float(trimmed.mean()),
        winsorized_mean=float(winsorized.mean()),
        min=float(srt[0]),
        max=float(srt[-1]),
        range=float(srt[-1] - srt[0]),
        standard_deviation=sd,
        standard_error=se,
        variance=sd * sd,
        confidence_intervals=cis)


def histogram(values: Sequence[float], rule: str = "freedman-diaconis") -> HistogramSpec:
    """Bin a sample; Freedman-Diaconis width with a sqrt-rule fallback."""
    arr = _check_values(values)
    n = len(arr)
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        return HistogramSpec(bin_edges=(lo - 0.5, hi + 0.5), counts=(n,))
    if rule not in ("freedman-diaconis", "sqrt"):
        raise ValueError(f"unknown binning rule {rule!r}")
    bins = 0
    if rule == "freedman-diaconis":
        q75, q25 = np.percentile(arr, [75, 25])
        iqr = float(q75 - q25)
        if iqr > 0:
            width = 2.0 * iqr * n ** (-1.0 / 3.0)
            bins = max(int(math.ceil((hi - lo) / width)), 1)
    if bins == 0:
        bins = max(int(math.ceil(math.sqrt(n))), 1)
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(arr, bins=edges)
    return HistogramSpec(bin_edges=tuple(edges.tolist()),
                         counts=tuple(int(c) for c in counts))


def _ranks(arr: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their mean rank."""
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr), dtype=float)
    i = 0
    srt = arr[order]
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and srt[j + 1] == srt[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Rank correlation in [-1, 1]; ties receive average ranks."""
    a = np.asarray(xs, dtype=float)
    b = np.asarray(ys, dtype=float)
    if len(a) != len(b):
        raise InsufficientDataError("sequences must have equal length")
    if len(a) < 3:
        raise InsufficientDataError("need at least 3 pairs")
    ra, rb = _ranks(a), _ranks(b)
    da = ra - ra.mean()
    db = rb - rb.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0:
        raise InsufficientDataError("rank variance is zero")
    return float(da @ db) / denom


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> tuple[float, float]:
    """H statistic (tie-corrected) and its chi-square approximate p-value."""
    if len(groups) < 2:
        raise InsufficientDataError("need at least 2 groups")
    sizes = [len(g) for g in groups]
    if any(s < 1 for s in sizes):
        raise InsufficientDataError("every group needs at least 1 value")
    pooled = np.concatenate([np.asarray(g, dtype=float) for g in groups])
    n = len(pooled)
    if n < 5:
        raise InsufficientDataError("need at least 5 values in total")
    ranks = _ranks(pooled)
    h = 0.0
    start = 0
    for size in sizes:
        r = ranks[start:start + size]
        h += r.sum() ** 2 / size
        start += size
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    # Tie correction.
    _, counts = np.unique(pooled, return_counts=True)
    correction = 1.0 - float(((counts ** 3 - counts)).sum()) / (n ** 3 - n)
    if correction > 0:
        h /= correction
    p = float(chi2.sf(h, len(groups) - 1))
    return float(h), p


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """Standardized mean difference with a pooled standard deviation."""
    xa = _check_values(a)
    xb = _check_values(b)
    na, nb = len(xa), len(xb)
    pooled_var = ((na - 1) * xa.var(ddof=1) + (nb - 1) * xb.var(ddof=1)) / (na + nb - 2)
    if pooled_var <= 0:
        raise InsufficientDataError("pooled standard deviation is zero")
    return float((xa.mean() - xb.mean()) / math.sqrt(pooled_var))
