"""Observables of a sample and their empirical tails and moments.

Order statistics X_k^* are taken of |x_i|; the exceedance count N_x(t) is
one-sided on the signed coordinates, ties at t counting as exceedances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats as sps

from lctails.distributions import DistributionSpec, SampleBatch, sample

RARE_EVENT_FLOOR = 1e-6


@dataclass(frozen=True)
class TailEstimate:
    point: float
    ci_low: float
    ci_high: float
    level: float
    count: int
    successes: int

    def __post_init__(self):
        if not 0.0 <= self.ci_low <= self.point <= self.ci_high <= 1.0:
            raise ValueError(f"inconsistent tail estimate {self}")

    @property
    def resolution(self) -> float:
        """Upper CI endpoint for zero successes: the smallest probability this sample can certify."""
        return clopper_pearson(0, self.count, self.level)[1]

    @property
    def rare(self) -> bool:
        """Point estimate below the rare-event floor; such tails are flagged, never extrapolated."""
        return self.point < RARE_EVENT_FLOOR


@dataclass(frozen=True)
class MeanEstimate:
    """Sample mean with a percentile-bootstrap interval."""

    point: float
    ci_low: float
    ci_high: float
    level: float
    count: int


def clopper_pearson(successes: int, count: int, level: float = 0.95) -> tuple[float, float]:
    """Exact two-sided binomial interval from Beta quantiles."""
    if count < 1:
        raise ValueError("count must be positive")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    k = int(successes)
    alpha = 1.0 - level
    lo = 0.0 if k == 0 else float(sps.beta.ppf(alpha / 2, k, count - k + 1))
    hi = 1.0 if k == count else float(sps.beta.ppf(1 - alpha / 2, k + 1, count - k))
    return lo, hi


def tail_from_counts(successes: int, count: int, level: float = 0.95) -> TailEstimate:
    lo, hi = clopper_pearson(successes, count, level)
    point = successes / count
    return TailEstimate(point, min(lo, point), max(hi, point), level, int(count), int(successes))


def order_statistics(x) -> np.ndarray:
    """|x| sorted nonincreasing along the last axis (X_1^* is the maximum)."""
    return -np.sort(-np.abs(np.asarray(x, dtype=float)), axis=-1)


def exceedance_count(x, t: float):
    """N_x(t) = #{i : x_i >= t} along the last axis."""
    out = np.count_nonzero(np.asarray(x, dtype=float) >= t, axis=-1)
    return int(out) if np.ndim(out) == 0 else out


def lr_norm(x, r: float):
    """l_r norm along the last axis, scaled by max|x_i| to avoid overflow; r may be inf."""
    r = float(r)
    if not r >= 1:
        raise ValueError(f"l_r norm needs r >= 1 or r = inf, got {r}")
    a = np.abs(np.asarray(x, dtype=float))
    m = a.max(axis=-1, keepdims=True)
    if math.isinf(r):
        out = m[..., 0]
    else:
        safe = np.where(m > 0, m, 1.0)
        out = (safe * (np.sum((a / safe) ** r, axis=-1, keepdims=True)) ** (1.0 / r))[..., 0]
        out = np.where(m[..., 0] > 0, out, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def empirical_tail(values, threshold: float, level: float = 0.95) -> TailEstimate:
    """Fraction of values >= threshold with its Clopper-Pearson interval."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("empirical_tail needs at least one value")
    return tail_from_counts(int(np.count_nonzero(v >= threshold)), v.size, level)


def bootstrap_mean_ci(values, resamples: int = 1000, level: float = 0.95, seed: int = 0) -> MeanEstimate:
    """Percentile bootstrap for the mean.

    Resampling is done on the distinct values with multinomial weights, which
    is the same bootstrap law as index resampling and much cheaper for
    integer-valued statistics such as exceedance counts.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("no values to bootstrap")
    m = v.size
    uniq, freq = np.unique(v, return_counts=True)
    point = float(np.dot(uniq, freq) / m)
    if uniq.size == 1:
        return MeanEstimate(point, point, point, level, m)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    probs = freq / m
    means = np.empty(resamples)
    batch = max(1, min(resamples, 2_000_000 // uniq.size))
    for start in range(0, resamples, batch):
        stop = min(resamples, start + batch)
        counts = rng.multinomial(m, probs, size=stop - start)
        means[start:stop] = counts @ uniq / m
    alpha = 1.0 - level
    lo, hi = np.quantile(means, [alpha / 2, 1 - alpha / 2])
    return MeanEstimate(point, float(min(lo, point)), float(max(hi, point)), level, m)


def empirical_N_moment(batch: SampleBatch, t: float, p: float, *, resamples: int = 1000,
                       level: float = 0.95, seed: int = 0) -> MeanEstimate:
    """Estimate E (t^2 N_X(t))^p over the rows of ``batch``."""
    if p < 1:
        raise ValueError("p must be at least 1")
    counts = exceedance_count(batch.data, t)
    return bootstrap_mean_ci((t * t * counts) ** p, resamples, level, seed)


@dataclass(frozen=True)
class PaleyZygmund:
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs


def paley_zygmund_check(values, theta: float) -> PaleyZygmund:
    """Compare P(Z >= theta E Z) with (1 - theta)^2 (E Z)^2 / E Z^2 on the empirical law."""
    z = np.asarray(values, dtype=float).ravel()
    if z.size == 0 or np.any(z < 0):
        raise ValueError("values must be nonempty and nonnegative")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    m1 = z.mean()
    m2 = np.mean(z * z)
    if m2 == 0:
        raise ValueError("all values are zero")
    lhs = float(np.mean(z >= theta * m1))
    return PaleyZygmund(lhs, float((1 - theta) ** 2 * m1 * m1 / m2))


@dataclass(frozen=True)
class ConditionalTailSum:
    """P(A) and sum_i P(A and X_i >= t); ``total`` is None when no sample lands in A."""

    pA: TailEstimate
    total: MeanEstimate | None

    @property
    def insufficient(self) -> bool:
        return self.total is None


def conditional_tail_sum(batch: SampleBatch, K: Callable[[np.ndarray], np.ndarray], t: float, *,
                         level: float = 0.95, resamples: int = 1000, seed: int = 0) -> ConditionalTailSum:
    """Estimate P(X in K) and the mean of 1{x in K} N_x(t).

    ``K`` maps a (count, n) array to a boolean membership mask.
    """
    mask = np.asarray(K(batch.data), dtype=bool)
    if mask.shape != (batch.count,):
        raise ValueError("membership predicate must return one boolean per row")
    inside = int(mask.sum())
    pA = tail_from_counts(inside, batch.count, level)
    if inside == 0:
        return ConditionalTailSum(pA, None)
    contrib = np.where(mask, exceedance_count(batch.data, t), 0)
    return ConditionalTailSum(pA, bootstrap_mean_ci(contrib, resamples, level, seed))


def conditional_heavy_count(batch: SampleBatch, K: Callable[[np.ndarray], np.ndarray], t: float, u: float) -> int:
    """#{i : P(A and X_i >= t) >= e^{-u} P(A)} on the empirical law."""
    mask = np.asarray(K(batch.data), dtype=bool)
    inside = int(mask.sum())
    if inside == 0:
        raise ValueError("no samples in the conditioning set")
    cond = np.count_nonzero(batch.data[mask] >= t, axis=0) / inside
    return int(np.count_nonzero(cond >= math.exp(-u)))


def median_ci(values, level: float = 0.95) -> tuple[float, float, float]:
    """Sample median with the distribution-free order-statistic interval."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    m = v.size
    alpha = 1.0 - level
    lo_idx = int(sps.binom.ppf(alpha / 2, m, 0.5))
    hi_idx = int(sps.binom.isf(alpha / 2, m, 0.5))
    lo_idx = max(lo_idx - 1, 0)
    hi_idx = min(hi_idx, m - 1)
    return float(np.median(v)), float(v[lo_idx]), float(v[hi_idx])


def empirical_median_orderstat(n: int, k: int, spec: DistributionSpec, count: int, seed: int) -> float:
    """Sample median of X_k^* over ``count`` draws from ``spec`` in dimension n."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    if spec.n != n:
        spec = spec.with_dimension(n)
    batch = sample(spec, count, seed)
    return float(np.median(kth_largest_abs(batch.data, k)))


def kth_largest_abs(data: np.ndarray, k: int) -> np.ndarray:
    """X_k^* per row without a full sort."""
    a = np.abs(np.asarray(data, dtype=float))
    n = a.shape[-1]
    return np.partition(a, n - k, axis=-1)[..., n - k]
