"""Finite lemmas from the proofs that can be checked exactly."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

ENUMERATION_GUARD = 10 ** 8


@dataclass(frozen=True)
class LevelSequence:
    """Nonincreasing positive integers l_0 >= l_1 >= ... >= l_s."""

    levels: tuple[int, ...]

    def __init__(self, levels):
        levels = tuple(int(v) for v in levels)
        if not levels:
            raise ValueError("a level sequence needs at least l_0")
        if any(v < 1 for v in levels):
            raise ValueError(f"levels must be positive: {levels}")
        if any(b > a for a, b in zip(levels, levels[1:])):
            raise ValueError(f"levels must be nonincreasing: {levels}")
        object.__setattr__(self, "levels", levels)

    @property
    def s(self) -> int:
        return len(self.levels) - 1

    @property
    def l0(self) -> int:
        return self.levels[0]


def _as_seq(seq) -> LevelSequence:
    return seq if isinstance(seq, LevelSequence) else LevelSequence(seq)


def combf_bound(seq) -> float:
    """prod_{i=1}^s (e l_{i-1} / l_i)^{l_i}; 1 for s = 0."""
    lv = _as_seq(seq).levels
    log_total = sum(b * (1.0 + math.log(a / b)) for a, b in zip(lv, lv[1:]))
    return math.exp(log_total)


def combf_search_space(seq) -> int:
    seq = _as_seq(seq)
    return (seq.s + 1) ** seq.l0


def _subsets_up_to(members: list[int], cap: int):
    for size in range(min(cap, len(members)) + 1):
        for combo in itertools.combinations(members, size):
            yield list(combo)


def combf_enumerate(seq) -> int:
    """#{f : {1..l_0} -> {0..s} with #{r : f(r) >= i} <= l_i for 1 <= i <= s}.

    Each admissible f is listed once through its nested level sets
    A_1 ⊇ A_2 ⊇ ... ⊇ A_s, A_i = {r : f(r) >= i}, choosing A_i inside A_{i-1}
    with at most l_i elements.
    """
    seq = _as_seq(seq)
    size = combf_search_space(seq)
    if size > ENUMERATION_GUARD:
        raise ValueError(f"search space (s+1)^l0 = {size:.3g} exceeds the guard {ENUMERATION_GUARD:.0e}")
    lv = seq.levels

    def count(level: int, members: list[int]) -> int:
        if level > seq.s:
            return 1
        return sum(count(level + 1, sub) for sub in _subsets_up_to(members, lv[level]))

    return count(1, list(range(seq.l0)))


def combf_bruteforce(seq) -> int:
    """Same count by iterating over every function {1..l_0} -> {0..s}."""
    seq = _as_seq(seq)
    if combf_search_space(seq) > ENUMERATION_GUARD:
        raise ValueError("search space exceeds the guard")
    lv = seq.levels
    total = 0
    for f in itertools.product(range(seq.s + 1), repeat=seq.l0):
        if all(sum(1 for v in f if v >= i) <= lv[i] for i in range(1, seq.s + 1)):
            total += 1
    return total


def nonincreasing_sequences(max_l0: int, max_s: int):
    """Every nonincreasing positive sequence with l_0 <= max_l0 and s <= max_s."""
    for s in range(max_s + 1):
        for l0 in range(1, max_l0 + 1):
            for rest in itertools.combinations_with_replacement(range(l0, 0, -1), s):
                yield LevelSequence((l0, *rest))


@dataclass(frozen=True)
class LemmaCase:
    levels: tuple[int, ...]
    count: int
    bound: float

    @property
    def holds(self) -> bool:
        return self.count <= self.bound


def combf_check_all(max_l0: int = 5, max_s: int = 3) -> list[LemmaCase]:
    return [LemmaCase(q.levels, combf_enumerate(q), combf_bound(q))
            for q in nonincreasing_sequences(max_l0, max_s)]


def halving_levels_log_excess(l: float, j: int) -> float:
    """log prod_{i=1}^j (e l_{i-1}/l_i)^{l_i} - 2l for the halving levels l_i = 2^{-i} l.

    Every ratio is 2, so the product is (2e)^{l(1 - 2^{-j})}; a nonpositive
    result means the product is at most e^{2l}.
    """
    levels = [l * 2.0 ** -i for i in range(j + 1)]
    return math.fsum(b * (1.0 + math.log(a / b)) for a, b in zip(levels, levels[1:])) - 2.0 * l


def dyadic_log_sum(n: int, r: float) -> float:
    """sum_{k=0}^{s} 2^k log^r(e n 2^{-k}), s = floor(log2 n)."""
    n = int(n)
    if n < 2:
        raise ValueError("n must be at least 2")
    s = n.bit_length() - 1
    return math.fsum(2.0 ** k * math.log(math.e * n / 2.0 ** k) ** r for k in range(s + 1))


def dyadic_tk_sum(r: float, s: int) -> float:
    """sum_{k=0}^{s} 2^{k(2-r)/2} for r > 2."""
    if r <= 2:
        raise ValueError("r must exceed 2")
    if s < 0:
        raise ValueError("s must be nonnegative")
    return math.fsum(2.0 ** (k * (2.0 - r) / 2.0) for k in range(int(s) + 1))


def dyadic_tk_limit(r: float) -> float:
    """(1 - 2^{(2-r)/2})^{-1}, the s -> infinity value of :func:`dyadic_tk_sum`."""
    if r <= 2:
        raise ValueError("r must exceed 2")
    return 1.0 / (1.0 - 2.0 ** ((2.0 - r) / 2.0))


def fit_power_constant(values: dict[tuple[int, float], float]) -> float:
    """Smallest C with value <= (C r)^r n for every ((n, r), value)."""
    return max((v / n) ** (1.0 / r) / r for (n, r), v in values.items())


def fit_ratio_constant(values: dict[float, float]) -> float:
    """Smallest C with value <= C r / (r - 2) for every (r, value)."""
    return max(v * (r - 2) / r for r, v in values.items())
