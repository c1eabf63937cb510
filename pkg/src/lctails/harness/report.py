"""Turn ledger files into plot-ready CSVs, a text summary table and figures."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

from lctails.harness.runner import atomic_write

PLOT_COLUMNS = ["distribution", "n", "param", "t", "empirical", "ci_low", "ci_high", "rhs", "in_envelope", "status"]
_PARAM_KEYS = ("k", "r", "p", "u")


def _load_ledgers(ledger_dir: Path) -> list[dict]:
    out = []
    for path in sorted(ledger_dir.glob("*.json")):
        out.append(json.loads(path.read_text()))
    return out


def _param_label(cell: dict) -> str:
    parts = [f"{k}={cell[k]:g}" for k in _PARAM_KEYS if k in cell and cell[k] is not None]
    return ",".join(parts)


def plot_rows(ledgers: list[dict]) -> dict[str, list[dict]]:
    """One list of rows per inequality, in ledger file order."""
    rows: dict[str, list[dict]] = defaultdict(list)
    for led in ledgers:
        for c in led["cells"]:
            rows[led["family"]].append({
                "distribution": led["meta"].get("distribution", ""),
                "n": led["params"].get("n"),
                "param": _param_label(c),
                "t": c["t"],
                "empirical": c["empirical"],
                "ci_low": c["ci_low"],
                "ci_high": c["ci_high"],
                "rhs": c["rhs"],
                "in_envelope": c["in_envelope"],
                "status": c["status"],
            })
    return rows


def summary_table(ledgers: list[dict]) -> str:
    header = f"{'family':<18}{'distribution':<28}{'n':>6}{'fitted_C':>11}  {'status':<16}{'pass':>6}{'unres':>7}{'uncon':>7}{'viol':>6}"
    lines = [header, "-" * len(header)]
    for led in ledgers:
        counts = defaultdict(int)
        for c in led["cells"]:
            counts[c["status"]] += 1
        fc = "-" if led["fitted_C"] is None else f"{led['fitted_C']:.4g}"
        lines.append(f"{led['family']:<18}{led['meta'].get('distribution', ''):<28}{led['params'].get('n', ''):>6}"
                     f"{fc:>11}  {led['status']:<16}{counts['pass']:>6}{counts['unresolved']:>7}"
                     f"{counts['unconstrained']:>7}{counts['violation']:>6}")
    return "\n".join(lines) + "\n"


def render_report(run_dir, output_dir=None, figures: bool = True) -> list[Path]:
    """Write ``<family>.csv`` plot data, ``summary.txt`` and optionally ``<family>.png``."""
    run_dir = Path(run_dir)
    ledger_dir = run_dir / "ledgers"
    if not ledger_dir.is_dir():
        raise FileNotFoundError(f"no ledgers directory under {run_dir}")
    out = Path(output_dir) if output_dir else run_dir / "report"
    ledgers = _load_ledgers(ledger_dir)
    written = []
    rows = plot_rows(ledgers)
    for family, fam_rows in rows.items():
        path = out / f"{family}.csv"
        lines = [",".join(PLOT_COLUMNS)]
        for r in fam_rows:
            lines.append(",".join("" if r[k] is None else str(r[k]) for k in PLOT_COLUMNS))
        atomic_write(path, "\n".join(lines) + "\n")
        written.append(path)
    summary = summary_table(ledgers)
    atomic_write(out / "summary.txt", summary)
    written.append(out / "summary.txt")
    if figures:
        from lctails.harness.figures import family_figure

        for family, fam_rows in rows.items():
            written.append(family_figure(family, fam_rows, out / f"{family}.png"))
    return written
