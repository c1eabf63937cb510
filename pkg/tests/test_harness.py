import csv
import io
import json
import time

import numpy as np
import pytest

from lctails.harness import cli
from lctails.harness.config import OUTPUT_ENV, ConfigError, parse_config, smoke_config
from lctails.harness.report import render_report
from lctails.harness.runner import run_experiment


def write_config(path, cfg):
    path.write_text(json.dumps(cfg))
    return path


# -- config ------------------------------------------------------------------

def test_empty_grid_rejected():
    cfg = smoke_config()
    cfg["families"][0]["t"] = []
    with pytest.raises(ConfigError, match="t grid is empty"):
        parse_config(cfg)


def test_all_problems_listed():
    cfg = smoke_config()
    del cfg["seed"]
    cfg["sample_count"] = 10
    cfg["smoke"] = False
    cfg["families"].append({"id": "Bogus", "n": [4]})
    with pytest.raises(ConfigError) as info:
        parse_config(cfg)
    msgs = " ".join(info.value.problems)
    assert "seed" in msgs and "sample_count" in msgs and "Bogus" in msgs


def test_missing_family_grid():
    cfg = smoke_config()
    cfg["families"] = [{"id": "LrTailSmall", "n": [8], "t": [1, 2]}]
    with pytest.raises(ConfigError, match="missing 'r'"):
        parse_config(cfg)


def test_config_hash_ignores_output_dir(tmp_path):
    a = parse_config(smoke_config(str(tmp_path / "a")))
    b = parse_config(smoke_config(str(tmp_path / "b")))
    assert a.config_hash == b.config_hash


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert parse_config(smoke_config()).resolve_output_dir() == tmp_path / "env"


# -- runner -----------------------------------------------------------------

def test_smoke_run(tmp_path):
    start = time.perf_counter()
    report = run_experiment(parse_config(smoke_config(str(tmp_path))))
    assert time.perf_counter() - start < 5
    assert report.exit_code == 0
    (led,) = report.ledgers
    assert led.fitted_C is not None
    assert led.meta["config_hash"] == report.provenance["config_hash"]
    assert (tmp_path / "ledgers" / "MainOrderStat__exponential__n8.json").exists()
    assert (tmp_path / "ledgers" / "MainOrderStat__exponential__n8.csv").exists()
    assert not list(tmp_path.rglob("*.part"))


def test_runs_log_is_append_only(tmp_path):
    cfg = parse_config(smoke_config(str(tmp_path)))
    run_experiment(cfg)
    run_experiment(cfg)
    lines = (tmp_path / "runs.jsonl").read_text().splitlines()
    assert len(lines) == 2


def test_workers_do_not_change_ledgers(tmp_path):
    raw = smoke_config()
    raw["distributions"].append({"kind": "cube"})
    raw["families"][0]["n"] = [8, 16]
    cfg = parse_config(raw)
    run_experiment(cfg, workers=1, output_dir=tmp_path / "w1")
    run_experiment(cfg, workers=4, output_dir=tmp_path / "w4")
    files = sorted(p.name for p in (tmp_path / "w1" / "ledgers").iterdir())
    assert len(files) == 8
    for name in files:
        assert (tmp_path / "w1" / "ledgers" / name).read_bytes() == (tmp_path / "w4" / "ledgers" / name).read_bytes()


def test_multi_family_run_shares_batch(tmp_path):
    raw = smoke_config(str(tmp_path))
    raw["sample_count"] = 4000
    raw["smoke"] = False
    raw["families"] = [
        {"id": "MainOrderStat", "n": [16], "t": {"geomspace": [0.1, 40, 24]}},
        {"id": "UncondOrderStat", "n": [16], "t": {"geomspace": [0.1, 40, 24]}},
        {"id": "Paouris", "n": [16], "t": {"linspace": [1, 3, 5]}},
        {"id": "EstNMoment", "n": [16], "p": [1, 2]},
        {"id": "LrTailSmall", "n": [16], "r": [1, 2], "t": {"geomspace": [1, 400, 20]}},
        {"id": "LrTailLarge", "n": [16], "r": [4], "t": {"geomspace": [1, 400, 20]}},
        {"id": "LinfTail", "n": [16], "t": {"geomspace": [0.5, 100, 20]}},
        {"id": "EstLarger", "n": [16], "r": [4], "t": {"geomspace": [1, 400, 20]}},
        {"id": "LrMomentSmall", "n": [16], "r": [1], "p": [2, 4]},
        {"id": "LrMomentLarge", "n": [16], "r": [4], "p": [2, 4], "refined": True},
        {"id": "LinfMoment", "n": [16], "p": [2, 4]},
        {"id": "Cond1", "n": [16], "a": [0.924], "t": {"geomspace": [0.5, 60, 20]}},
        {"id": "Cond2", "n": [16], "a": [0.924], "u": [1, 2], "t": {"geomspace": [1, 60, 12]}},
    ]
    report = run_experiment(parse_config(raw))
    fams = {l.family.id.value: l for l in report.ledgers}
    assert len(fams) == 13
    assert {l.meta["seed"] for l in report.ledgers} == {report.ledgers[0].meta["seed"]}
    assert "proof_conditions" in fams["EstNMoment"].meta
    assert fams["LrMomentLarge"].family.params["refined"] is True
    assert fams["Cond1"].family.params["pA"] == pytest.approx(np.exp(-2), abs=0.02)


def test_polytope_group_is_whitened(tmp_path):
    a = np.vstack([np.eye(3), -np.eye(3), [[1, 1, 1]]])
    b = [1, 2, 1, 1, 3, 1, 2]
    raw = smoke_config(str(tmp_path))
    raw["sample_count"] = 20_000
    raw["distributions"] = [{"kind": "polytope", "halfspaces": [[*row, off] for row, off in zip(a.tolist(), b)]}]
    raw["families"] = [{"id": "MainOrderStat", "n": [3, 8], "t": {"geomspace": [0.05, 20, 16]}}]
    report = run_experiment(parse_config(raw))
    (group,) = report.diagnostics["groups"]
    assert group["n"] == 3
    assert group["isotropy"]["max_abs_cov_dev"] < 1e-8
    assert group["mcmc"]["burn_in"] == 450


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        run_experiment(parse_config(smoke_config()), output_dir=blocker / "sub")


# -- report -------------------------------------------------------------------

def test_report_files(tmp_path):
    run_experiment(parse_config(smoke_config(str(tmp_path))))
    files = render_report(tmp_path)
    names = {p.name for p in files}
    assert names == {"MainOrderStat.csv", "MainOrderStat.png", "summary.txt"}
    rows = list(csv.DictReader(io.StringIO((tmp_path / "report" / "MainOrderStat.csv").read_text())))
    assert list(rows[0]) == ["distribution", "n", "param", "t", "empirical", "ci_low", "ci_high", "rhs", "in_envelope", "status"]
    assert (tmp_path / "report" / "MainOrderStat.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert "MainOrderStat" in (tmp_path / "report" / "summary.txt").read_text()


def test_report_missing_input(tmp_path):
    with pytest.raises(FileNotFoundError):
        render_report(tmp_path / "nothing")


# -- CLI ----------------------------------------------------------------------

def run_cli(args, capsys):
    code = cli.main(args)
    return code, capsys.readouterr()


def test_cli_verify_and_report(tmp_path, capsys):
    cfg = write_config(tmp_path / "smoke.json", smoke_config(str(tmp_path / "out")))
    code, out = run_cli(["verify", "--config", str(cfg)], capsys)
    assert code == 0
    assert "MainOrderStat" in out.out
    code, out = run_cli(["report", "--input", str(tmp_path / "out"), "--no-figures"], capsys)
    assert code == 0
    assert not (tmp_path / "out" / "report" / "MainOrderStat.png").exists()


def test_cli_verify_invalid_config(tmp_path, capsys):
    cfg = smoke_config()
    cfg["families"][0]["t"] = []
    code, out = run_cli(["verify", "--config", str(write_config(tmp_path / "bad.json", cfg))], capsys)
    assert code == 2
    assert "t grid is empty" in out.err


def test_cli_verify_missing_file(tmp_path, capsys):
    code, _ = run_cli(["verify", "--config", str(tmp_path / "none.json")], capsys)
    assert code == 3


def test_cli_no_qualifying_constant(tmp_path, capsys):
    cfg = smoke_config(str(tmp_path / "out"))
    cfg["constant_search_grid"] = [0.25]
    cfg["families"][0]["t"] = [0.6, 0.8, 1.0]
    code, out = run_cli(["verify", "--config", str(write_config(tmp_path / "c.json", cfg))], capsys)
    assert code == 1
    assert "no qualifying C" in out.out


def test_cli_combf(capsys):
    code, out = run_cli(["combf", "--max-l0", "5", "--max-s", "3"], capsys)
    assert code == 0
    assert "all cases pass" in out.out


def test_cli_tails_oracle(capsys):
    code, out = run_cli(["tails", "--dist", "exponential", "-n", "64", "-k", "8", "--oracle", "--count", "20000"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out.out)))
    assert len(rows) == 12
    assert {"exact", "exact_in_ci", "point", "ci_low", "ci_high", "seed"} <= set(rows[0])
    assert sum(r["exact_in_ci"] == "True" for r in rows) >= 10


def test_cli_tails_oracle_needs_exponential(capsys):
    code, _ = run_cli(["tails", "--dist", "cube", "-n", "4", "--oracle"], capsys)
    assert code == 2


def test_cli_moments(capsys):
    code, out = run_cli(["moments", "--dist", "exponential", "-n", "16", "--count", "5000", "--t", "1",
                         "--order", "1", "2", "--r", "1", "inf", "--oracle", "--resamples", "100"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out.out)))
    assert [r["statistic"] for r in rows] == ["N_moment", "N_moment", "lr_moment_p1", "lr_moment_p2",
                                              "lr_moment_p1", "lr_moment_p2"]
    assert float(rows[0]["ci_low"]) <= float(rows[0]["exact"]) <= float(rows[0]["ci_high"])


def test_cli_sample(tmp_path, capsys):
    out = tmp_path / "b.npy"
    code, _ = run_cli(["sample", "--dist", "lp_ball", "--p", "1", "-n", "3", "--count", "100", "--seed", "4",
                       "--out", str(out)], capsys)
    assert code == 0 and np.load(out).shape == (100, 3)
    code, text = run_cli(["sample", "--dist", "rotated", "--base", "cube", "-n", "2", "--count", "3"], capsys)
    assert code == 0 and text.out.splitlines()[0] == "x1,x2"


def test_cli_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["tails", "--bogus"])
    assert info.value.code == 2
