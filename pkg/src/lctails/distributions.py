"""Samplers for isotropic log-concave ensembles and exact oracles for the iid exponential case.

Every built-in ensemble except ``polytope`` is returned in isotropic position
(mean zero, identity covariance).  Randomness is drawn from independent
``PCG64`` streams, one per fixed-size block of rows, keyed by ``(seed, block)``.
The block layout does not depend on the number of workers, so a batch is
bit-identical however it is computed.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np
from scipy import optimize, special, stats

from lctails._hit_and_run import run_chain

__all__ = [
    "BLOCK_ROWS",
    "Kind",
    "DistributionSpec",
    "SampleBatch",
    "sample",
    "sample_sphere",
    "hit_and_run_chain",
    "exponential_tail_exact",
    "exponential_onesided_tail",
    "binomial_tail",
    "binomial_moment",
    "orderstat_tail_exact",
    "orderstat_median_exact",
    "exceedance_moment_exact",
    "save_batch",
    "load_batch",
]

BLOCK_ROWS = 4096
SQRT2 = math.sqrt(2.0)
_ORTHO_TOL = 1e-10
_MASK64 = (1 << 64) - 1


class Kind(str, Enum):
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"
    CUBE = "cube"
    LP_BALL = "lp_ball"
    SIMPLEX = "simplex"
    POLYTOPE = "polytope"
    ROTATED = "rotated"


@dataclass(frozen=True, eq=False)
class DistributionSpec:
    """Declarative description of one ensemble in dimension ``n``.

    Use the classmethod constructors; they validate the invariants (orthogonal
    rotation, bounded polytope with an interior point).
    """

    kind: Kind
    n: int
    p: float | None = None
    normals: np.ndarray | None = None
    offsets: np.ndarray | None = None
    interior: np.ndarray | None = None
    base: DistributionSpec | None = None
    rotation: np.ndarray | None = None
    rotation_seed: int | None = None

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError(f"dimension must be positive, got {self.n}")
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Kind.LP_BALL and (self.p is None or self.p <= 0):
            raise ValueError("lp_ball needs an exponent p > 0")
        if kind is Kind.ROTATED:
            if self.base is None or self.rotation is None:
                raise ValueError("rotated spec needs a base spec and a rotation")
            q = np.asarray(self.rotation, dtype=float)
            if q.shape != (self.n, self.n) or self.base.n != self.n:
                raise ValueError("rotation shape does not match the dimension")
            err = np.max(np.abs(q.T @ q - np.eye(self.n)))
            if err > _ORTHO_TOL:
                raise ValueError(f"rotation is not orthogonal (max |Q^T Q - I| = {err:.3g})")
        if kind is Kind.POLYTOPE:
            _validate_polytope(self.normals, self.offsets, self.interior)

    # constructors ---------------------------------------------------------

    @classmethod
    def exponential(cls, n: int) -> DistributionSpec:
        return cls(Kind.EXPONENTIAL, n)

    @classmethod
    def gaussian(cls, n: int) -> DistributionSpec:
        return cls(Kind.GAUSSIAN, n)

    @classmethod
    def cube(cls, n: int) -> DistributionSpec:
        return cls(Kind.CUBE, n)

    @classmethod
    def lp_ball(cls, n: int, p: float) -> DistributionSpec:
        return cls(Kind.LP_BALL, n, p=float(p))

    @classmethod
    def simplex(cls, n: int) -> DistributionSpec:
        return cls(Kind.SIMPLEX, n)

    @classmethod
    def polytope(cls, normals, offsets, interior=None) -> DistributionSpec:
        """Uniform law on ``{x : normals @ x <= offsets}``.

        Without an explicit interior point the Chebyshev center is used.
        """
        a = np.atleast_2d(np.asarray(normals, dtype=float))
        b = np.asarray(offsets, dtype=float).ravel()
        if interior is None:
            interior = chebyshev_center(a, b)
        return cls(Kind.POLYTOPE, a.shape[1], normals=a, offsets=b,
                   interior=np.asarray(interior, dtype=float))

    @classmethod
    def rotated(cls, base: DistributionSpec, rotation=None, *, seed: int | None = None) -> DistributionSpec:
        """Law of ``Q X`` with ``X ~ base``; ``Q`` is Haar-random when only ``seed`` is given."""
        if rotation is None:
            if seed is None:
                raise ValueError("either a rotation matrix or a rotation seed is required")
            rotation = haar_rotation(base.n, seed)
        return cls(Kind.ROTATED, base.n, base=base, rotation=np.asarray(rotation, dtype=float),
                   rotation_seed=seed)

    def with_dimension(self, n: int) -> DistributionSpec:
        """Same ensemble in dimension ``n`` (not defined for explicit polytopes)."""
        if self.kind is Kind.POLYTOPE:
            raise ValueError("an explicit polytope has a fixed dimension")
        if self.kind is Kind.ROTATED:
            if self.rotation_seed is None:
                raise ValueError("only seeded rotations can change dimension")
            return DistributionSpec.rotated(self.base.with_dimension(n), seed=self.rotation_seed)
        return DistributionSpec(self.kind, n, p=self.p)

    # properties -----------------------------------------------------------

    @property
    def label(self) -> str:
        if self.kind is Kind.LP_BALL:
            return f"lp_ball(p={self.p:g})"
        if self.kind is Kind.ROTATED:
            return f"rotated({self.base.label})"
        return self.kind.value

    @property
    def isotropic(self) -> bool:
        return self.kind is not Kind.POLYTOPE

    @property
    def unconditional(self) -> bool:
        return self.kind in (Kind.EXPONENTIAL, Kind.GAUSSIAN, Kind.CUBE, Kind.LP_BALL)

    # serialization --------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind.value, "n": int(self.n)}
        if self.kind is Kind.LP_BALL:
            d["p"] = float(self.p)
        if self.kind is Kind.POLYTOPE:
            d["halfspaces"] = [[*map(float, a), float(b)] for a, b in zip(self.normals, self.offsets)]
            d["interior"] = [float(v) for v in self.interior]
        if self.kind is Kind.ROTATED:
            d["base"] = self.base.to_dict()
            if self.rotation_seed is not None:
                d["rotation_seed"] = int(self.rotation_seed)
            else:
                d["rotation"] = self.rotation.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> DistributionSpec:
        kind = Kind(d["kind"])
        n = d.get("n")
        if kind is Kind.POLYTOPE:
            rows = np.asarray(d["halfspaces"], dtype=float)
            return cls.polytope(rows[:, :-1], rows[:, -1], d.get("interior"))
        if n is None:
            raise ValueError(f"spec {d!r} has no dimension 'n'")
        if kind is Kind.ROTATED:
            base = dict(d["base"])
            base.setdefault("n", n)
            if "rotation" in d:
                return cls.rotated(cls.from_dict(base), d["rotation"])
            return cls.rotated(cls.from_dict(base), seed=int(d["rotation_seed"]))
        return cls(kind, int(n), p=d.get("p"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> DistributionSpec:
        return cls.from_dict(json.loads(text))


@dataclass
class SampleBatch:
    """``count`` sample rows in dimension ``n`` with their provenance."""

    data: np.ndarray
    spec: DistributionSpec | None
    seed: int
    count: int
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[0] != self.count:
            raise ValueError(f"data shape {self.data.shape} does not match count {self.count}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("sample batch contains non-finite entries")

    @property
    def n(self) -> int:
        return self.data.shape[1]


# polytope helpers ---------------------------------------------------------

def _validate_polytope(a, b, interior):
    if a is None or b is None or interior is None:
        raise ValueError("polytope needs normals, offsets and an interior point")
    if a.shape[0] != b.shape[0]:
        raise ValueError("normals and offsets disagree in length")
    if not np.all(a @ interior < b):
        raise ValueError("interior point is not strictly feasible")
    n = a.shape[1]
    for i in range(n):
        for sign in (1.0, -1.0):
            c = np.zeros(n)
            c[i] = -sign
            res = optimize.linprog(c, A_ub=a, b_ub=b, bounds=[(None, None)] * n, method="highs")
            if res.status == 3:
                raise ValueError(f"polytope is unbounded along coordinate {i}")
            if res.status != 0:
                raise ValueError(f"polytope feasibility check failed: {res.message}")


def chebyshev_center(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Center of the largest inscribed Euclidean ball of ``{a x <= b}``."""
    m, n = a.shape
    norms = np.linalg.norm(a, axis=1)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    res = optimize.linprog(c, A_ub=np.hstack([a, norms[:, None]]), b_ub=b,
                           bounds=[(None, None)] * n + [(0, None)], method="highs")
    if res.status != 0 or res.x[-1] <= 1e-12:
        raise ValueError("polytope has empty interior or is unbounded")
    return res.x[:n]


def haar_rotation(n: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix)."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & _MASK64)))
    z = rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diag(r))


# sampling -----------------------------------------------------------------

def _block_rng(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=(int(block),))
    return np.random.Generator(np.random.PCG64(ss))


def _lp_ball_rows(rng: np.random.Generator, m: int, n: int, p: float) -> np.ndarray:
    # generalized Gaussian coordinates plus one exponential variate, normalized
    g = rng.standard_gamma(1.0 / p, size=(m, n))
    signs = np.where(rng.random((m, n)) < 0.5, -1.0, 1.0)
    s = signs * g ** (1.0 / p)
    z = rng.standard_exponential(m)
    denom = (g.sum(axis=1) + z) ** (1.0 / p)
    return s / denom[:, None]


def _simplex_whitening(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean and symmetric inverse square root of the covariance of the uniform simplex."""
    mean = np.full(n, 1.0 / (n + 1))
    c = 1.0 / ((n + 1) ** 2 * (n + 2))
    # covariance c((n+1) I - J): eigenvalue c on the all-ones line, c(n+1) on its complement
    proj = np.full((n, n), 1.0 / n)
    w = (np.eye(n) - proj) / math.sqrt(c * (n + 1)) + proj / math.sqrt(c)
    return mean, w


def _draw(spec: DistributionSpec, rng: np.random.Generator, m: int) -> np.ndarray:
    n = spec.n
    kind = spec.kind
    if kind is Kind.EXPONENTIAL:
        return rng.laplace(0.0, 1.0 / SQRT2, size=(m, n))
    if kind is Kind.GAUSSIAN:
        return rng.standard_normal((m, n))
    if kind is Kind.CUBE:
        return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=(m, n))
    if kind is Kind.LP_BALL:
        from lctails.isotropy import lp_ball_isotropic_scale

        return lp_ball_isotropic_scale(spec.p, n) * _lp_ball_rows(rng, m, n, spec.p)
    if kind is Kind.SIMPLEX:
        e = rng.standard_exponential((m, n + 1))
        x = e[:, :n] / e.sum(axis=1, keepdims=True)
        mean, w = _simplex_whitening(n)
        return (x - mean) @ w
    if kind is Kind.ROTATED:
        return _draw(spec.base, rng, m) @ spec.rotation.T
    raise ValueError(f"no block sampler for {kind.value}")


def _check_count(count: int) -> int:
    count = int(count)
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    return count


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0 or seed > _MASK64:
        raise ValueError("seed must be a nonnegative 64-bit integer")
    return seed


def _blockwise(fn, count: int, workers: int) -> np.ndarray:
    nblocks = -(-count // BLOCK_ROWS)
    sizes = [min(BLOCK_ROWS, count - b * BLOCK_ROWS) for b in range(nblocks)]
    if workers > 1 and nblocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, range(nblocks), sizes))
    else:
        parts = [fn(b, m) for b, m in zip(range(nblocks), sizes)]
    return np.concatenate(parts, axis=0)


def sample(spec: DistributionSpec, count: int, seed: int, *, workers: int = 1) -> SampleBatch:
    """Draw ``count`` iid rows from ``spec``.

    The result depends only on ``(spec, count, seed)``; ``workers`` only
    changes how the row blocks are scheduled.  Polytopes are sampled with one
    hit-and-run chain and are *not* isotropic (see :func:`lctails.isotropy.whiten`).
    """
    count = _check_count(count)
    seed = _check_seed(seed)
    if spec.kind is Kind.POLYTOPE:
        batch = hit_and_run_chain((spec.normals, spec.offsets), spec.interior, count, seed=seed)
        batch.spec = spec
        return batch
    data = _blockwise(lambda b, m: _draw(spec, _block_rng(seed, b), m), count, workers)
    return SampleBatch(data, spec, seed, count)


def sample_sphere(n: int, count: int, seed: int, *, workers: int = 1) -> SampleBatch:
    """Uniform points on the unit sphere in R^n (normalized Gaussian rows)."""
    if int(n) < 1:
        raise ValueError("n must be positive")
    count = _check_count(count)
    seed = _check_seed(seed)

    def block(b, m):
        z = _block_rng(seed, b).standard_normal((m, n))
        return z / np.linalg.norm(z, axis=1, keepdims=True)

    return SampleBatch(_blockwise(block, count, workers), None, seed, count)


def hit_and_run_chain(polytope, start, steps: int, burn_in: int | None = None,
                      thinning: int | None = None, seed: int = 0) -> SampleBatch:
    """Hit-and-run walk targeting the uniform law on ``{x : A x <= b}``.

    ``polytope`` is a pair ``(A, b)``.  Returns ``steps`` states, taken every
    ``thinning`` moves after ``burn_in`` moves.  Defaults are ``50 n^2`` and
    ``n``.  Chords along degenerate directions (length below 1e-12) are
    skipped and counted in ``diagnostics["degenerate_chords"]``.
    """
    a = np.ascontiguousarray(np.atleast_2d(np.asarray(polytope[0], dtype=float)))
    b = np.ascontiguousarray(np.asarray(polytope[1], dtype=float).ravel())
    x = np.array(start, dtype=float).ravel()
    n = a.shape[1]
    steps = int(steps)
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if x.shape != (n,) or not np.all(a @ x < b):
        raise ValueError("start point is not strictly inside the polytope")
    burn_in = 50 * n * n if burn_in is None else int(burn_in)
    thinning = n if thinning is None else int(thinning)
    if burn_in < 0 or thinning < 1:
        raise ValueError("burn_in must be >= 0 and thinning >= 1")
    seed = _check_seed(seed)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    total = burn_in + steps * thinning
    out = np.empty((steps, n))
    done = 0
    kept = 0
    degenerate = 0
    chunk = 1 << 15
    while done < total:
        m = min(chunk, total - done) + 16
        z = rng.standard_normal((m, n))
        dirs = z / np.linalg.norm(z, axis=1, keepdims=True)
        us = rng.random(m)
        done, kept, deg = run_chain(a, b, x, dirs, us, done, total, burn_in, thinning, out, kept)
        if deg < 0:
            raise ValueError("polytope is unbounded along a sampled direction")
        degenerate += deg
    diag = {"burn_in": burn_in, "thinning": thinning, "moves": total,
            "degenerate_chords": int(degenerate)}
    return SampleBatch(out, None, seed, steps, diag)


# exact oracles for the iid symmetric exponential --------------------------

def exponential_tail_exact(t):
    """P(|X_1| >= t) = exp(-sqrt(2) t) for the variance-one symmetric exponential."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    out = np.exp(-SQRT2 * t)
    return float(out) if out.ndim == 0 else out


def exponential_onesided_tail(t):
    """P(X_1 >= t) for the variance-one symmetric exponential, any real t."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 0, 0.5 * np.exp(-SQRT2 * np.abs(t)), 1.0 - 0.5 * np.exp(-SQRT2 * np.abs(t)))
    return float(out) if out.ndim == 0 else out


def _log_pmf(n: int, q: float, j: int) -> float:
    v = stats.binom.pmf(j, n, q)
    if v > 1e-280:
        return math.log(v)
    return float(stats.binom.logpmf(j, n, q))


def _log_sum_run(n: int, q: float, start: int, stop: int, step: int) -> float:
    """log of sum of Bin(n, q) pmf over start, start+step, ..., stop (inclusive)."""
    js = np.arange(start, stop + step, step, dtype=float)
    if step > 0:
        ratios = np.log(n - js[:-1]) - np.log(js[:-1] + 1) + math.log(q) - math.log1p(-q)
    else:
        ratios = np.log(js[:-1]) - np.log(n - js[:-1] + 1) + math.log1p(-q) - math.log(q)
    logs = _log_pmf(n, q, start) + np.concatenate([[0.0], np.cumsum(ratios)])
    return float(special.logsumexp(logs))


def binomial_tail(n: int, q: float, k: int) -> float:
    """P(Bin(n, q) >= k), summed in log space from the dominant end."""
    n = int(n)
    k = int(k)
    if n < 1:
        raise ValueError("n must be positive")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be a probability, got {q}")
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return 1.0
    if k > n * q:
        return min(1.0, math.exp(_log_sum_run(n, q, k, n, 1)))
    lower = math.exp(_log_sum_run(n, q, k - 1, 0, -1))
    return max(0.0, 1.0 - lower)


def _stirling2_row(p: int) -> list[int]:
    row = [1]
    for m in range(1, p + 1):
        new = [0] * (m + 1)
        for j in range(1, m + 1):
            new[j] = j * (row[j] if j < len(row) else 0) + row[j - 1]
        row = new
    return row


def binomial_moment(n: int, q, p: int):
    """E[Bin(n, q)^p] in exact rational arithmetic.

    Uses E K^p = sum_j S(p, j) n(n-1)...(n-j+1) q^j.  A ``Fraction`` ``q``
    gives a ``Fraction`` result; otherwise the float ``q`` is converted exactly
    and the result is rounded once.
    """
    n = int(n)
    p = int(p)
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive integers")
    exact = isinstance(q, Fraction)
    qf = q if exact else Fraction(float(q))
    if not 0 <= qf <= 1:
        raise ValueError("q must be a probability")
    total = Fraction(0)
    falling = 1
    for j, s in enumerate(_stirling2_row(p)):
        if j > 0:
            falling *= n - j + 1
        if s and falling:
            total += s * falling * qf ** j
    return total if exact else float(total)


def orderstat_tail_exact(n: int, k: int, t: float) -> float:
    """P(X_k^* >= t) for n iid variance-one symmetric exponentials."""
    return binomial_tail(n, exponential_tail_exact(t), k)


def orderstat_median_exact(n: int, k: int) -> float:
    """Median of X_k^* for n iid variance-one symmetric exponentials."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    hi = (math.log(2.0 * n) + 40.0) / SQRT2
    return optimize.brentq(lambda t: orderstat_tail_exact(n, k, t) - 0.5, 0.0, hi, xtol=1e-14, rtol=1e-14)


def exceedance_moment_exact(n: int, t: float, p: int) -> float:
    """E (t^2 N_X(t))^p for iid exponential coordinates, N_X(t) ~ Bin(n, P(X_1 >= t))."""
    return t ** (2 * p) * binomial_moment(n, exponential_onesided_tail(t), p)


# persistence --------------------------------------------------------------

def save_batch(batch: SampleBatch, path) -> Path:
    """Write a batch as ``.npy`` or ``.csv`` plus a ``.meta.json`` sidecar.

    CSV columns are ``x1, ..., xn`` in coordinate order, one row per sample.
    """
    path = Path(path)
    if path.suffix == ".npy":
        np.save(path, batch.data)
    else:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(batch.n)])
            w.writerows(batch.data.tolist())
    meta = {"spec": batch.spec.to_dict() if batch.spec is not None else None,
            "seed": batch.seed, "count": batch.count, "n": batch.n,
            "diagnostics": batch.diagnostics}
    path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def load_batch(path) -> SampleBatch:
    path = Path(path)
    meta = json.loads(path.with_suffix(".meta.json").read_text())
    if path.suffix == ".npy":
        data = np.load(path)
    else:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    spec = DistributionSpec.from_dict(meta["spec"]) if meta["spec"] else None
    return SampleBatch(data, spec, meta["seed"], meta["count"], meta.get("diagnostics", {}))
