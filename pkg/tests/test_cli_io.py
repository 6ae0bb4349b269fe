import csv
import hashlib
import io
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from bcsim.cli import main
from bcsim.config import DEFAULT_CONFIG, ConfigError, load_config, read_life_table
from bcsim.engine import METRICS, ExperimentResult, SimulationConfig, run_experiment
from bcsim.report import TOTAL, emit_reports, read_raw_summary, summarize

DATA = DEFAULT_CONFIG.parent


def copy_config(tmp_path, edit=None):
    for f in DATA.glob("*.csv"):
        shutil.copy(f, tmp_path / f.name)
    text = DEFAULT_CONFIG.read_text()
    if edit:
        text = edit(text)
    cfg = tmp_path / "run.toml"
    cfg.write_text(text)
    return cfg


def test_default_config_matches_published_constants(inputs):
    p, c, s = inputs.params, inputs.costs, inputs.simulation
    assert (s.total_cycles, s.cycles_per_year, s.start_year, s.replications) == (364, 52, 2019, 100)
    assert (s.population_fraction, s.scale_factor, s.lockdown_window) == (0.01, 100.0, (61, 113))
    assert p.progression_k == 0.0009
    assert p.progression_lambda_diagnosed == (10, 15, 20, 25)
    assert p.progression_lambda_undiagnosed == (20, 25, 30, 35)
    assert p.healing_k == 1 / 3
    assert p.dfs5["normal"] == (0.987, 0.873, 0.52, 0.037)
    assert p.dfs5["lockdown"] == (0.801, 0.708, 0.422, 0.03)
    assert p.death_lambda_diagnosed["normal"] == (0.0061, 0.0302, 0.1642, 0.2939)
    assert p.death_lambda_diagnosed["lockdown"] == (0.0056, 0.0344, 0.1903, 0.3715)
    assert p.death_lambda_undiagnosed == (0.0061, 0.0349, 0.1989, 0.3932)
    assert p.annual_diagnosis_prob == {"normal": 0.124, "lockdown": 0.116}
    assert p.incidence_by_decade[40] == 0.000029 and p.incidence_by_decade[80] == 0.000058
    assert c.direct_yearly_per_stage == (1881, 3185, 5573, 7869)
    assert (c.indirect_death, c.indirect_other_yearly) == (123564, 13159)


def test_dfs_out_of_range_names_field(tmp_path):
    cfg = copy_config(tmp_path, lambda t: t.replace("dfs5_normal = [0.987", "dfs5_normal = [1.2"))
    with pytest.raises(ConfigError) as err:
        load_config(cfg)
    assert "healing.dfs5_normal[0]" in str(err.value)
    assert main(["simulate", "--config", str(cfg), "--dump-params"]) == 2


def test_missing_life_table_field(tmp_path):
    cfg = copy_config(tmp_path, lambda t: t.replace('life_table = "life_table.csv"\n', ""))
    with pytest.raises(ConfigError) as err:
        load_config(cfg)
    assert "tables.life_table" in str(err.value)


def test_missing_and_unparsable_files(tmp_path, capsys):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[simulation\nx = 1\n")
    with pytest.raises(ConfigError, match="parse error"):
        load_config(bad)
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "parse error" in capsys.readouterr().err


def test_life_table_reader(tmp_path):
    good = tmp_path / "lt.csv"
    good.write_text("age,q\n25,0.01\n26,0.02\n")
    assert read_life_table(good) == {25: 0.01, 26: 0.02}
    bad = tmp_path / "lt_bad.csv"
    bad.write_text("age,q\n25,1.5\n")
    with pytest.raises(ConfigError, match="line 2"):
        read_life_table(bad)


def test_dump_params_stdout(capsys):
    assert main(["simulate", "--dump-params"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    by = {(r["parameter"], r["scenario"], r["stage"]): float(r["value"]) for r in rows}
    assert by[("lambda_from_survival5", "", "3")] == pytest.approx(0.1642, abs=1e-4)
    assert by[("projected_prevalence_2019", "", "")] == 263590
    assert by[("healing_lambda", "normal", "1")] > by[("healing_lambda", "lockdown", "1")]


@pytest.fixture(scope="module")
def small_result(inputs, params):
    from bcsim.population import build_initial_cohort

    cfg = SimulationConfig(replications=3, population_fraction=0.001, scale_factor=1000.0, base_seed=21)
    cohort = build_initial_cohort(inputs.ages, inputs.disease, cfg.population_fraction, [cfg.base_seed, 1])
    return run_experiment(cfg, cohort, params, inputs.costs)


def test_reports_round_trip(small_result, tmp_path):
    paths = emit_reports(small_result, tmp_path)
    names = {p.relative_to(tmp_path).as_posix() for p in paths}
    for f in ("costs_covid.csv", "costs_nocovid.csv", "events_covid.csv", "differences.csv", "replications.csv", "summary.csv", "manifest.json"):
        assert f in names
    for sc in ("covid", "nocovid"):
        for m in METRICS:
            parsed = read_raw_summary(tmp_path / "raw" / f"{sc}_{m}.csv")
            data = small_result.yearly[sc][m]
            for j, year in enumerate(small_result.years):
                s = summarize(data[:, j])
                assert parsed[str(year)]["mean"] == s.mean
                assert parsed[str(year)]["ci_low"] == s.ci_low
            assert parsed[TOTAL]["mean"] == summarize(data.sum(axis=1)).mean
    with open(tmp_path / "replications.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 3 * 7
    r = next(r for r in rows if r["scenario"] == "covid" and r["replication"] == "2" and r["year"] == "2021")
    assert float(r["total_cost"]) == small_result.yearly["covid"]["total_cost"][2, 2]


def test_display_tables(small_result, tmp_path):
    emit_reports(small_result, tmp_path)
    with open(tmp_path / "costs_nocovid.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["year"] for r in rows] == [str(y) for y in range(2019, 2026)] + [TOTAL]
    total = small_result.yearly["nocovid"]["total_cost"].sum(axis=1).mean() / 1e6
    assert float(rows[-1]["total_cost_mln_pln"]) == pytest.approx(total, abs=0.05)
    assert list(rows[0])[:3] == ["year", "direct_cost_mln_pln", "direct_cost_ci_half_width"]


def test_manifest_checksums(small_result, tmp_path):
    emit_reports(small_result, tmp_path, params_rows=[("x", "", "", 1.0)])
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seeds"]["covid"] == [21, 22, 23]
    assert manifest["config"]["replications"] == 3
    for rel, digest in manifest["files"].items():
        assert hashlib.sha256((tmp_path / rel).read_bytes()).hexdigest() == digest
    assert "params.csv" in manifest["files"]


def test_zero_replications_writes_nothing(tmp_path):
    cfg = SimulationConfig(replications=0)
    empty = ExperimentResult(config=cfg, years=cfg.years)
    out = tmp_path / "out"
    with pytest.raises(ValueError):
        emit_reports(empty, out)
    assert not out.exists() or not any(out.iterdir())


def test_cli_determinism_and_exit_codes(tmp_path):
    args = ["simulate", "--replications", "2", "--fraction", "0.0005", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for rel in files:
        if rel.name == "manifest.json":
            continue
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["cohort_size"] > 0 and manifest["config_raw"]["simulation"]["total_cycles"] == 364

    assert main(["simulate", "--replications", "1", "--fraction", "0.0005", "--scenario", "covid", "--out", str(tmp_path / "c")]) == 0
    assert not (tmp_path / "c" / "differences.csv").exists()
    assert main(["simulate", "--replications", "0", "--out", str(tmp_path / "d")]) == 2
    assert not (tmp_path / "d").exists()
    assert main(["simulate"]) == 2
    assert main(["simulate", "--fraction", "1.5", "--out", str(tmp_path / "e")]) == 2


def test_cli_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["simulate", "--replications", "1", "--fraction", "0.0005", "--out", str(blocker / "sub")]) == 4


def test_no_crn_seeds(tmp_path):
    assert main(["simulate", "--replications", "2", "--fraction", "0.0005", "--seed", "10", "--no-crn", "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seeds"] == {"nocovid": [10, 11], "covid": [12, 13]}


def test_cli_model_error(tmp_path):
    cfg = copy_config(tmp_path, lambda t: t.replace("80 = 0.000058", "80 = 0.9999"))
    assert main(["simulate", "--config", str(cfg), "--replications", "1", "--fraction", "0.001", "--out", str(tmp_path / "o")]) == 3
