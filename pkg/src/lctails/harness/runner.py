"""Execute an experiment: one batch per (distribution, n), every family fitted on it."""

from __future__ import annotations

import json
import math
import os
import re
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from lctails import __version__
from lctails.bounds import (
    BoundCheck,
    BoundFamily,
    ConstantLedger,
    FamilyId,
    estN_proof_conditions,
    fit_constant,
)
from lctails.distributions import Kind, SampleBatch, sample
from lctails.harness.config import ExperimentConfig, FamilyConfig
from lctails.isotropy import isotropy_diagnostics, whiten
from lctails.stats import (
    bootstrap_mean_ci,
    clopper_pearson,
    conditional_heavy_count,
    exceedance_count,
    lr_norm,
    order_statistics,
    tail_from_counts,
)


@dataclass
class RunReport:
    ledgers: list[ConstantLedger]
    diagnostics: dict[str, Any]
    provenance: dict[str, Any]
    files: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 1 if any(l.fitted_C is None for l in self.ledgers) else 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "provenance": self.provenance,
            "exit_code": self.exit_code,
            "ledgers": [
                {"family": l.family.id.value, "distribution": l.meta.get("distribution"),
                 "n": l.family.params.get("n"), "fitted_C": l.fitted_C, "status": l.status,
                 "config_hash": l.meta.get("config_hash")}
                for l in self.ledgers
            ],
            "diagnostics": self.diagnostics,
            "files": self.files,
        }


def derive_seed(*parts: int) -> int:
    """64-bit seed from a tuple of nonnegative integers."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_")


def _tails_at(sorted_values: np.ndarray, thresholds, level: float) -> list:
    m = sorted_values.size
    idx = np.searchsorted(sorted_values, thresholds, side="left")
    return [tail_from_counts(int(m - i), m, level) for i in idx]


def family_cells(fam: FamilyConfig, batch: SampleBatch, n: int, level: float,
                 resamples: int, seed: int):
    """BoundFamily plus its cells (a list, or a function of C) for one batch."""
    x = batch.data
    fid = fam.id
    family = BoundFamily(fid, {"n": n})

    if fid in (FamilyId.MAIN_ORDERSTAT, FamilyId.UNCOND_ORDERSTAT, FamilyId.EXPCONC_ORDERSTAT):
        srt = order_statistics(x)
        cells = []
        for k in fam.k_values(n):
            col = np.sort(srt[:, k - 1])
            for t, est in zip(fam.t, _tails_at(col, fam.t, level)):
                cells.append(BoundCheck.from_estimate(t, est, k=k))
        return family, cells

    if fid is FamilyId.PAOURIS:
        norms = np.sort(np.linalg.norm(x, axis=1))
        root_n = math.sqrt(n)

        def paouris_cells(C):
            ests = _tails_at(norms, [C * t * root_n for t in fam.t], level)
            return [BoundCheck.from_estimate(t, e) for t, e in zip(fam.t, ests)]

        return family, paouris_cells

    if fid is FamilyId.ESTN_MOMENT:
        ps = fam.values("p")

        def estn_cells(C):
            out = []
            for j, p in enumerate(ps):
                thr = family.threshold(C, p=p)
                if thr is None:
                    continue
                vals = (thr * thr * exceedance_count(x, thr)) ** p
                est = bootstrap_mean_ci(vals, resamples, level, derive_seed(seed, j))
                out.append(BoundCheck.from_estimate(thr, est, p=p))
            return out

        return family, estn_cells

    if fid in (FamilyId.LR_TAIL_SMALL, FamilyId.LR_TAIL_LARGE, FamilyId.EST_LARGER, FamilyId.LINF_TAIL):
        rs = [math.inf] if fid is FamilyId.LINF_TAIL else fam.values("r")
        cells = []
        for r in rs:
            norms = np.sort(lr_norm(x, r))
            extra = {} if fid is FamilyId.LINF_TAIL else {"r": r}
            for t, est in zip(fam.t, _tails_at(norms, fam.t, level)):
                cells.append(BoundCheck.from_estimate(t, est, **extra))
        return family, cells

    if fid in (FamilyId.LR_MOMENT_SMALL, FamilyId.LR_MOMENT_LARGE, FamilyId.LINF_MOMENT):
        rs = [math.inf] if fid is FamilyId.LINF_MOMENT else fam.values("r")
        if fid is FamilyId.LR_MOMENT_LARGE and fam.grids.get("refined"):
            family = BoundFamily(fid, {"n": n, "refined": True})
        cells = []
        for i, r in enumerate(rs):
            norms = lr_norm(x, r)
            for j, p in enumerate(fam.values("p")):
                est = bootstrap_mean_ci(norms ** p, resamples, level, derive_seed(seed, i, j))
                extra = {} if fid is FamilyId.LINF_MOMENT else {"r": r}
                cells.append(BoundCheck(p, est.point ** (1 / p), est.ci_low ** (1 / p),
                                        est.ci_high ** (1 / p), extra, 0.0, est.count))
        return family, cells

    if fid in (FamilyId.COND1, FamilyId.COND2):
        a = float(fam.values("a")[0])
        member = lambda rows: rows[:, 0] >= a
        inside = int(np.count_nonzero(member(x)))
        pA = inside / batch.count
        family = BoundFamily(fid, {"n": n, "pA": pA, "a": a})
        if inside == 0:
            return family, []
        if fid is FamilyId.COND1:
            mask = member(x)
            # contributions lie in [0, n]; with no contributing row nothing below this is certifiable
            resolution = n * clopper_pearson(0, batch.count, level)[1]
            cells = []
            for j, t in enumerate(fam.t):
                contrib = np.where(mask, exceedance_count(x, t), 0)
                est = bootstrap_mean_ci(contrib, resamples, level, derive_seed(seed, j))
                cells.append(replace(BoundCheck.from_estimate(t, est), resolution=resolution))
            return family, cells
        cells = []
        for t in fam.t:
            for u in fam.values("u"):
                cnt = conditional_heavy_count(batch, member, t, u)
                cells.append(BoundCheck.exact(t, float(cnt), u=u))
        return family, cells

    raise ValueError(f"no evaluator for {fid}")


def _run_group(config: ExperimentConfig, dist_index: int, n: int) -> tuple[list[ConstantLedger], dict]:
    spec = config.spec_for(dist_index, n)
    seed = derive_seed(config.seed, dist_index, n)
    batch = sample(spec, config.sample_count, seed)
    diag: dict[str, Any] = {"distribution": spec.label, "n": n, "seed": seed, "count": batch.count}
    if spec.kind is Kind.POLYTOPE:
        diag["mcmc"] = batch.diagnostics
        batch = whiten(batch)
    iso = isotropy_diagnostics(batch)
    diag["isotropy"] = {"max_abs_mean": iso.max_abs_mean, "max_abs_cov_dev": iso.max_abs_cov_dev,
                        "within_3se": iso.within(3.0)}
    ledgers = []
    for fi, fam in enumerate(config.families):
        if n not in fam.n:
            continue
        family, cells = family_cells(fam, batch, n, config.confidence, config.bootstrap_resamples,
                                     derive_seed(seed, fi))
        if not callable(cells) and not cells:
            continue
        ledger = fit_constant(family, cells, config.constant_search_grid)
        ledger.meta.update({
            "config_hash": config.config_hash,
            "distribution": spec.label,
            "seed": seed,
            "count": batch.count,
            "confidence": config.confidence,
            "unconditional": spec.unconditional,
        })
        if family.id is FamilyId.ESTN_MOMENT and ledger.fitted_C is not None:
            ledger.meta["proof_conditions"] = [
                {"p": c.params["p"], **estN_proof_conditions(n, c.params["p"], c.t, ledger.fitted_C)}
                for c in ledger.cells
            ]
        ledgers.append(ledger)
    return ledgers, diag


def atomic_write(path: Path, text: str) -> None:
    """Write via a temporary file and rename, so readers never see a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def ledger_basename(ledger: ConstantLedger) -> str:
    return f"{ledger.family.id.value}__{slug(ledger.meta['distribution'])}__n{ledger.family.params['n']}"


def run_experiment(config: ExperimentConfig, *, workers: int = 1, output_dir=None) -> RunReport:
    """Run every (distribution, n) group, write ledgers and a run report.

    Groups are independent and merged in canonical order, so the ledgers do
    not depend on ``workers``.
    """
    started = datetime.now(timezone.utc).isoformat()
    out = config.resolve_output_dir(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc

    groups = []
    for di, d in enumerate(config.distributions):
        fixed = len(d["halfspaces"][0]) - 1 if d["kind"] == Kind.POLYTOPE.value else None
        dims = sorted({n for f in config.families for n in f.n})
        for n in dims:
            if fixed is None or n == fixed:
                groups.append((di, n))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda g: _run_group(config, *g), groups))
    else:
        results = [_run_group(config, *g) for g in groups]

    ledgers = [l for ls, _ in results for l in ls]
    diagnostics = {"groups": [d for _, d in results]}
    files = []
    ledger_dir = out / "ledgers"
    for l in ledgers:
        base = ledger_basename(l)
        atomic_write(ledger_dir / f"{base}.json", l.to_json() + "\n")
        atomic_write(ledger_dir / f"{base}.csv", l.to_csv())
        files += [f"ledgers/{base}.json", f"ledgers/{base}.csv"]

    provenance = {
        "config_hash": config.config_hash,
        "code_version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "workers": workers,
    }
    report = RunReport(ledgers, diagnostics, provenance, files)
    text = json.dumps(report.to_dict(), indent=2, default=_default)
    atomic_write(out / "run_report.json", text + "\n")
    with open(out / "runs.jsonl", "a") as fh:
        fh.write(json.dumps(report.to_dict(), default=_default, separators=(",", ":")) + "\n")
    return report


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")
