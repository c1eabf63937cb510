"""Moment estimation and the affine map into isotropic position."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from lctails.distributions import SampleBatch

EIGEN_FLOOR = 1e-10


class SingularCovarianceError(ValueError):
    """Covariance has eigenvalues at or below the floor; carries the offending directions."""

    def __init__(self, eigenvalues, directions):
        self.eigenvalues = np.asarray(eigenvalues)
        self.directions = np.asarray(directions)
        super().__init__(
            f"covariance is singular: {len(self.eigenvalues)} eigenvalue(s) <= {EIGEN_FLOOR:g} "
            f"({np.array2string(self.eigenvalues, precision=3)}) along directions "
            f"{np.array2string(self.directions.T, precision=3)}"
        )


@dataclass
class MomentSummary:
    mean: np.ndarray
    covariance: np.ndarray
    count: int

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "covariance": self.covariance.tolist(), "count": self.count}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> MomentSummary:
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["covariance"], dtype=float), int(d["count"]))


@dataclass
class IsotropyReport:
    """Largest deviations from isotropy, with the standard errors to judge them by."""

    max_abs_mean: float
    max_abs_cov_dev: float
    mean_dev: np.ndarray
    cov_dev: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray

    def within(self, n_se: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.mean_dev) <= n_se * self.mean_se)
                    and np.all(np.abs(self.cov_dev) <= n_se * self.cov_se))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["statistic", "i", "j", "deviation", "se"])
        n = len(self.mean_dev)
        for i in range(n):
            w.writerow(["mean", i + 1, "", repr(float(self.mean_dev[i])), repr(float(self.mean_se[i]))])
        for i in range(n):
            for j in range(i, n):
                w.writerow(["cov", i + 1, j + 1, repr(float(self.cov_dev[i, j])), repr(float(self.cov_se[i, j]))])
        return buf.getvalue()


def estimate_moments(batch: SampleBatch) -> MomentSummary:
    """Sample mean and unbiased sample covariance."""
    if batch.count < 2:
        raise ValueError("need at least two samples to estimate a covariance")
    # column-major so each coordinate is reduced the same way wherever it sits
    x = np.asfortranarray(batch.data)
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (batch.count - 1)
    cov = 0.5 * (cov + cov.T)
    return MomentSummary(mean, cov, batch.count)


def _inverse_sqrt(cov: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(cov)
    bad = w <= EIGEN_FLOOR
    if np.any(bad):
        raise SingularCovarianceError(w[bad], v[:, bad])
    return (v / np.sqrt(w)) @ v.T


def whiten(batch: SampleBatch, summary: MomentSummary | None = None) -> SampleBatch:
    """Apply x -> Sigma^{-1/2} (x - mu) with the symmetric inverse square root.

    When ``summary`` comes from the batch itself the output has sample mean 0
    and sample covariance I up to rounding.
    """
    if summary is None:
        summary = estimate_moments(batch)
    root = _inverse_sqrt(summary.covariance)
    data = (batch.data - summary.mean) @ root
    diag = dict(batch.diagnostics)
    diag["whitened"] = True
    return SampleBatch(data, batch.spec, batch.seed, batch.count, diag)


def isotropy_diagnostics(batch: SampleBatch) -> IsotropyReport:
    """Deviation of the sample moments from (0, I) and plug-in standard errors.

    The standard error of a covariance entry is the sample standard deviation
    of the products x_i x_j over sqrt(count).
    """
    if batch.count < 2:
        raise ValueError("need at least two samples")
    x = batch.data
    m = batch.count
    summary = estimate_moments(batch)
    n = batch.n
    mean_se = x.std(axis=0, ddof=1) / math.sqrt(m)
    xc = x - summary.mean
    # Var(x_i x_j) = E x_i^2 x_j^2 - (E x_i x_j)^2, both as matrix products
    sq = xc * xc
    second = xc.T @ xc / m
    fourth = sq.T @ sq / m
    var = np.maximum(fourth - second * second, 0.0) * m / (m - 1)
    cov_se = np.sqrt(var / m)
    cov_dev = summary.covariance - np.eye(n)
    return IsotropyReport(
        max_abs_mean=float(np.max(np.abs(summary.mean))),
        max_abs_cov_dev=float(np.max(np.abs(cov_dev))),
        mean_dev=summary.mean,
        cov_dev=cov_dev,
        mean_se=mean_se,
        cov_se=cov_se,
    )


def lp_ball_coordinate_variance(p: float, n: int) -> float:
    """Variance of one coordinate of the uniform law on the unit l_p ball in R^n.

    E x_1^2 = 2 V_{n-1} / (p V_n) * B(3/p, (n-1)/p + 1), with
    V_m = (2 Gamma(1 + 1/p))^m / Gamma(1 + m/p).
    """
    p = float(p)
    if p <= 0 or n < 1:
        raise ValueError("need p > 0 and n >= 1")
    log_v = lambda m: m * math.log(2.0 * math.gamma(1.0 + 1.0 / p)) - special.gammaln(1.0 + m / p)
    log_ratio = log_v(n - 1) - log_v(n)
    return float(math.exp(math.log(2.0 / p) + log_ratio + special.betaln(3.0 / p, (n - 1) / p + 1.0)))


def lp_ball_isotropic_scale(p: float, n: int) -> float:
    """Factor s making the coordinates of s * Uniform(B_p^n) have unit variance."""
    if math.isinf(p):
        return math.sqrt(3.0)
    return 1.0 / math.sqrt(lp_ball_coordinate_variance(p, n))
