"""Experiment configuration (versioned JSON) and its validation."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from lctails.bounds import DEFAULT_SEARCH_GRID, FamilyId
from lctails.distributions import DistributionSpec, Kind

SCHEMA_VERSION = 1
OUTPUT_ENV = "LCTAILS_OUTPUT_DIR"
MIN_SAMPLES = 1000

# grid keys each family understands, besides "n" and "t"
_FAMILY_KEYS: dict[FamilyId, tuple[str, ...]] = {
    FamilyId.PAOURIS: (),
    FamilyId.UNCOND_ORDERSTAT: ("k",),
    FamilyId.EXPCONC_ORDERSTAT: ("k",),
    FamilyId.MAIN_ORDERSTAT: ("k",),
    FamilyId.ESTN_MOMENT: ("p",),
    FamilyId.LR_TAIL_SMALL: ("r",),
    FamilyId.LR_TAIL_LARGE: ("r",),
    FamilyId.LINF_TAIL: (),
    FamilyId.EST_LARGER: ("r",),
    FamilyId.COND1: ("a",),
    FamilyId.COND2: ("a", "u"),
    FamilyId.LR_MOMENT_SMALL: ("r", "p"),
    FamilyId.LR_MOMENT_LARGE: ("r", "p"),
    FamilyId.LINF_MOMENT: ("p",),
}
_NO_T_GRID = {FamilyId.ESTN_MOMENT, FamilyId.LR_MOMENT_SMALL, FamilyId.LR_MOMENT_LARGE, FamilyId.LINF_MOMENT}


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every violation found."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid experiment config:\n  - " + "\n  - ".join(self.problems))


def expand_grid(value) -> list[float]:
    """A list of numbers, or {"geomspace"|"linspace": [lo, hi, num]}."""
    if isinstance(value, dict):
        (kind, args), = value.items()
        lo, hi, num = args
        fn = {"geomspace": np.geomspace, "linspace": np.linspace}[kind]
        return [float(v) for v in fn(float(lo), float(hi), int(num))]
    if isinstance(value, (int, float)):
        return [float(value)]
    return [float(v) for v in value]


@dataclass
class FamilyConfig:
    id: FamilyId
    n: list[int]
    t: list[float] = field(default_factory=list)
    grids: dict[str, Any] = field(default_factory=dict)

    def k_values(self, n: int) -> list[int]:
        k = self.grids.get("k", "dyadic")
        if k == "dyadic":
            out, v = [], 1
            while v <= n // 2:
                out.append(v)
                v *= 2
            return out or [1]
        return [int(v) for v in k if 1 <= int(v) <= n]

    def values(self, key: str, default=None) -> list[float]:
        if key not in self.grids:
            return list(default) if default is not None else []
        return expand_grid(self.grids[key])

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id.value, "n": self.n, "t": self.t, **self.grids}


@dataclass
class ExperimentConfig:
    distributions: list[dict[str, Any]]
    families: list[FamilyConfig]
    sample_count: int
    seed: int
    confidence: float = 0.99
    constant_search_grid: list[float] = field(default_factory=lambda: list(DEFAULT_SEARCH_GRID))
    output_dir: str | None = None
    smoke: bool = False
    bootstrap_resamples: int = 1000
    raw: dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def config_hash(self) -> str:
        # output location does not change results
        hashed = {k: v for k, v in self.raw.items() if k != "output_dir"}
        canon = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def resolve_output_dir(self, override=None) -> Path:
        out = override or self.output_dir or os.environ.get(OUTPUT_ENV) or "lctails-out"
        return Path(out)

    def spec_for(self, index: int, n: int) -> DistributionSpec:
        d = dict(self.distributions[index])
        if Kind(d["kind"]) is Kind.POLYTOPE:
            return DistributionSpec.from_dict(d)
        d["n"] = n
        if "base" in d:
            d["base"] = {**d["base"], "n": n}
        return DistributionSpec.from_dict(d)


def _fixed_dim(d: dict[str, Any]) -> int | None:
    if d.get("kind") == Kind.POLYTOPE.value:
        return len(d["halfspaces"][0]) - 1
    return None


def parse_config(raw: dict[str, Any]) -> ExperimentConfig:
    """Validate a config dict, collecting every problem before raising."""
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    if raw.get("schema_version") != SCHEMA_VERSION:
        problems.append(f"schema_version must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    seed = raw.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        problems.append("seed is mandatory and must be a nonnegative integer")
    smoke = bool(raw.get("smoke", False))
    count = raw.get("sample_count")
    if not isinstance(count, int) or count < 1:
        problems.append("sample_count must be a positive integer")
    elif count < MIN_SAMPLES and not smoke:
        problems.append(f"sample_count {count} below {MIN_SAMPLES} requires \"smoke\": true")
    level = raw.get("confidence", 0.99)
    if not isinstance(level, (int, float)) or not 0 < level < 1:
        problems.append("confidence must lie in (0, 1)")
    grid = raw.get("constant_search_grid") or list(DEFAULT_SEARCH_GRID)
    try:
        grid = expand_grid(grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] <= 0:
            problems.append("constant_search_grid must be nonempty, positive and increasing")
    except Exception as exc:  # malformed grid spec
        problems.append(f"constant_search_grid: {exc}")
        grid = []
    resamples = raw.get("bootstrap_resamples", 1000)
    if not isinstance(resamples, int) or resamples < 10:
        problems.append("bootstrap_resamples must be an integer >= 10")

    dists = raw.get("distributions") or []
    if not dists:
        problems.append("distributions must be a nonempty list")
    for i, d in enumerate(dists):
        try:
            Kind(d["kind"])
            probe = dict(d)
            probe.setdefault("n", _fixed_dim(d) or 2)
            if "base" in probe:
                probe["base"] = {**probe["base"], "n": probe["n"]}
            DistributionSpec.from_dict(probe)
        except Exception as exc:
            problems.append(f"distributions[{i}]: {exc}")

    fams: list[FamilyConfig] = []
    fam_raw = raw.get("families") or []
    if not fam_raw:
        problems.append("families must be a nonempty list")
    for i, f in enumerate(fam_raw):
        where = f"families[{i}]"
        try:
            fid = FamilyId(f.get("id"))
        except ValueError:
            problems.append(f"{where}: unknown family id {f.get('id')!r}")
            continue
        ns = f.get("n")
        ns = [ns] if isinstance(ns, int) else ns
        if not ns or not all(isinstance(v, int) and v >= 1 for v in ns):
            problems.append(f"{where}: n grid must be a nonempty list of positive integers")
            ns = []
        t = []
        if fid not in _NO_T_GRID:
            try:
                t = expand_grid(f.get("t", []))
            except Exception as exc:
                problems.append(f"{where}: bad t grid ({exc})")
            if not t:
                problems.append(f"{where}: t grid is empty")
        grids = {k: v for k, v in f.items() if k not in ("id", "n", "t")}
        unknown = set(grids) - set(_FAMILY_KEYS[fid]) - {"refined"}
        if unknown:
            problems.append(f"{where}: unknown keys {sorted(unknown)}")
        for key in _FAMILY_KEYS[fid]:
            if key == "k" and grids.get("k", "dyadic") == "dyadic":
                continue
            if key not in grids:
                problems.append(f"{where}: missing {key!r} grid")
                continue
            try:
                vals = expand_grid(grids[key])
            except Exception as exc:
                problems.append(f"{where}: bad {key} grid ({exc})")
                continue
            if not vals:
                problems.append(f"{where}: {key} grid is empty")
            elif key == "r" and fid is FamilyId.LR_TAIL_SMALL and not all(1 <= r <= 2 for r in vals):
                problems.append(f"{where}: r must lie in [1, 2]")
            elif key == "r" and fid in (FamilyId.LR_TAIL_LARGE, FamilyId.LR_MOMENT_LARGE) and not all(r >= 2 for r in vals):
                problems.append(f"{where}: r must be at least 2")
            elif key == "r" and fid is FamilyId.EST_LARGER and not all(r > 2 for r in vals):
                problems.append(f"{where}: r must exceed 2")
            elif key == "p" and not all(p >= (2 if fid in _NO_T_GRID - {FamilyId.ESTN_MOMENT} else 1) for p in vals):
                problems.append(f"{where}: p below the family's minimum order")
        fams.append(FamilyConfig(fid, list(ns), t, grids))

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        distributions=[dict(d) for d in dists],
        families=fams,
        sample_count=int(count),
        seed=int(seed),
        confidence=float(level),
        constant_search_grid=grid,
        output_dir=raw.get("output_dir"),
        smoke=smoke,
        bootstrap_resamples=int(resamples),
        raw=raw,
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = json.load(fh)
    return parse_config(raw)


def smoke_config(output_dir=None) -> dict[str, Any]:
    """A small config that exercises the main families in a few seconds."""
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": 20240611,
        "smoke": True,
        "sample_count": 1000,
        "confidence": 0.99,
        "bootstrap_resamples": 200,
        "output_dir": output_dir,
        "distributions": [{"kind": "exponential"}],
        "families": [
            {"id": "MainOrderStat", "n": [8], "k": "dyadic", "t": {"geomspace": [0.05, 40, 32]}},
        ],
    }
