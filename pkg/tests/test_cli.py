import json

import numpy as np
import pytest
from pytest import approx

from paultrap.cli import EXIT_DOMAIN, EXIT_USAGE, main
from paultrap.commands import read_snapshot
from paultrap.core import DATA_DIR
from paultrap.csvio import read_columns, read_csv, write_csv
from paultrap.scenario import ScenarioError, load_scenario, run_scenario
from paultrap.units import parse_quantity


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_help_lists_subcommands(capsys):
    code, out, _ = run(capsys, "--help")
    assert code == 0
    for sub in ("circuit", "field", "displace", "ion", "simulate", "analyze", "fit",
                "tomography", "scenario", "plot"):
        assert sub in out


def test_field_with_unit_suffixes(capsys):
    code, out, _ = run(capsys, "field", "--urf", "0.1kV", "--uend", "1000mV", "--omega-rf", "4MHz")
    assert code == 0
    assert "U_rf = 100 V" in out and "0.138427" in out and "81.818" in out


def test_bad_unit_is_usage_error(capsys):
    code, _, err = run(capsys, "field", "--urf", "12xV")
    assert code == EXIT_USAGE
    assert "--urf" in err


def test_circuit_csv(tmp_path, capsys):
    out = tmp_path / "c.csv"
    code, text, _ = run(capsys, "circuit", "--load", "rod=X+:Cp=22pF", "--load",
                        "rod=X+:Cp=1.667pF:Cs=1nF", "--csv", out)
    assert code == 0
    cols, _ = read_columns(out, ["Cp_pF", "attenuation"])
    assert cols["attenuation"][0] == approx(2240 / 2262, rel=1e-9)
    assert cols["attenuation"][1] == approx(0.96, rel=1e-4)


def test_circuit_unknown_rod(capsys):
    code, _, err = run(capsys, "circuit", "--load", "rod=Q+:Cp=2pF")
    assert code == EXIT_USAGE
    assert "Q+" in err


def test_displace_csv(tmp_path, capsys):
    out = tmp_path / "d.csv"
    code, text, _ = run(capsys, "displace", "--rod", "X+:0.96", "--csv", out)
    assert code == 0
    assert "x = 23.9796 um" in text
    cols, _ = read_columns(out, ["delta", "x0_um_exact", "x0_um_linear"])
    assert cols["x0_um_exact"][cols["delta"] == 1.0] == approx(0.0, abs=1e-12)


def test_ion_reports_micromotion(tmp_path, capsys):
    code, text, _ = run(capsys, "ion", "--urf", "101.15", "--uend", "1", "--udc-x", "10um",
                        "--periods", "100", "--out", tmp_path / "ion.csv")
    assert code == 0
    amp = float(text.split("(x, y, z) = (")[1].split(",")[0])
    assert amp == approx(0.7, rel=0.02)


def test_ion_unstable_is_domain_error(capsys):
    code, _, err = run(capsys, "ion", "--urf", "900", "--periods", "30")
    assert code == EXIT_DOMAIN
    assert "unstable" in err


def test_simulate_analyze_round_trip(tmp_path, capsys):
    state = tmp_path / "s.csv"
    hist = tmp_path / "h.csv"
    code, _, _ = run(capsys, "simulate", "--n", "40", "--urf", "100", "--uend", "1",
                     "--steps", "2000", "--temperature", "1mK", "--seed", "3", "--out", state)
    assert code == 0
    ens = read_snapshot(state)
    assert ens.N == 40
    code, text, _ = run(capsys, "analyze", state, "--hist", hist)
    assert code == 0 and "alpha =" in text
    header, rows, _ = read_csv(hist)
    assert header == ["r_m", "count"]
    assert sum(int(r[1]) for r in rows) > 0


def test_simulate_needs_one_population(capsys):
    code, _, err = run(capsys, "simulate", "--n", "4", "--mix", "Ca-40:2,Ca-44:2", "--steps", "1")
    assert code == EXIT_USAGE


def test_analyze_schema_error(tmp_path, capsys):
    bad = write_csv(tmp_path / "bad.csv", ["a", "b"], [[1, 2]])
    code, _, err = run(capsys, "analyze", bad)
    assert code == EXIT_USAGE and "expected columns" in err


def test_fit_beta_uoff_shipped_data(tmp_path, capsys):
    out = tmp_path / "fit.csv"
    code, text, _ = run(capsys, "fit", "--model", "beta-uoff", "--in",
                        DATA_DIR / "paper_repro" / "aspect_ratios.csv", "--out", out)
    assert code == 0
    header, rows, _ = read_csv(out)
    vals = {r[0]: float(r[1]) for r in rows}
    assert vals["beta"] == approx(-2.311e-3, rel=0.01)
    assert vals["Uoff"] == approx(0.92, abs=0.05)


def test_fit_schema_mismatch(tmp_path, capsys):
    bad = write_csv(tmp_path / "bad.csv", ["alpha", "urf_V"], [[0.5, 100], [0.4, 200]])
    code, _, err = run(capsys, "fit", "--model", "beta-uoff", "--in", bad)
    assert code == EXIT_USAGE
    assert "uend_V" in err


def test_tomography_both_axes(tmp_path, capsys):
    out = tmp_path / "t.csv"
    code, text, _ = run(capsys, "tomography", "--axis", "both", "--mode-offset-y=-0.5um",
                        "--out", out)
    assert code == 0
    header, rows, _ = read_csv(tmp_path / "t_offsets.csv")
    off = {r[0]: float(r[1]) for r in rows}
    assert off["x"] == approx(0.0, abs=1e-6)
    assert off["y"] == approx(-0.5, abs=1e-4)


def test_threads_env(monkeypatch, capsys):
    monkeypatch.setenv("PAULTRAP_THREADS", "1")
    assert run(capsys, "field")[0] == 0
    monkeypatch.setenv("PAULTRAP_THREADS", "0")
    assert run(capsys, "field")[0] == EXIT_USAGE


# --- scenarios ---------------------------------------------------------------------------


def write_scenario(tmp_path, body, header="[scenario]\nname = t\nseed = 5\n"):
    p = tmp_path / "s.scenario"
    p.write_text(header + body)
    return p


def test_empty_scenario_writes_manifest_only(tmp_path, capsys):
    path = write_scenario(tmp_path, "")
    out = tmp_path / "out"
    code, _, _ = run(capsys, "scenario", path, "--out-dir", out)
    assert code == 0
    assert [p.name for p in out.iterdir()] == ["manifest.json"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["steps"] == [] and manifest["seed"] == 5


def test_unknown_step_command(tmp_path, capsys):
    path = write_scenario(tmp_path, "\n[one]\ncommand = frobnicate\n")
    code, _, err = run(capsys, "scenario", path, "--out-dir", tmp_path / "o")
    assert code == EXIT_USAGE
    assert "frobnicate" in err and "valid commands: analyze, balanced, circuit" in err


def test_parse_error_reports_line(tmp_path):
    path = write_scenario(tmp_path, "\n[one]\ncommand = field\nthis line has no separator\n")
    with pytest.raises(ScenarioError) as exc:
        load_scenario(path)
    assert exc.value.lineno == 7
    assert ":7:" in str(exc.value)


def test_unknown_step_reports_section_line(tmp_path):
    path = write_scenario(tmp_path, "\n[ok]\ncommand = field\n\n[bad]\ncommand = nope\n")
    with pytest.raises(ScenarioError) as exc:
        load_scenario(path)
    assert exc.value.lineno == 8


def test_missing_parameter(tmp_path, capsys):
    path = write_scenario(tmp_path, "\n[f]\ncommand = fit\nmodel = linear\n")
    code, _, err = run(capsys, "scenario", path, "--out-dir", tmp_path / "o")
    assert code == EXIT_USAGE and "missing parameter" in err


def test_domain_error_in_scenario(tmp_path, capsys):
    path = write_scenario(tmp_path, "\n[i]\ncommand = ion\nurf = 900V\nperiods = 30\n")
    code, _, _ = run(capsys, "scenario", path, "--out-dir", tmp_path / "o")
    assert code == EXIT_DOMAIN


def test_missing_scenario_file(capsys):
    code, _, err = run(capsys, "scenario", "/nonexistent/x.scenario")
    assert code == EXIT_USAGE


def test_manifest_records_inputs_and_units(tmp_path):
    data = write_csv(tmp_path / "xy.csv", ["x", "y"], [[1, 3], [2, 5], [3, 7]])
    path = write_scenario(tmp_path, "\n[fit]\ncommand = fit\nmodel = linear\nin = xy.csv\n"
                          "out = fit.csv\n\n[t]\ncommand = tomography\nrange = 0.04mm\n"
                          "points = 9\nout = tom.csv\n")
    manifest = json.loads(run_scenario(path, tmp_path / "o", echo=lambda s: None).read_text())
    assert "xy.csv" in manifest["inputs"]
    assert set(manifest["steps"][0]["outputs"]) == {"fit.csv"}
    raw = manifest["steps"][1]["params"]["range"]
    assert parse_quantity(raw, "m") == approx(40e-6)
    cols, _ = read_columns(tmp_path / "o" / "tom.csv", ["displacement_um"])
    assert cols["displacement_um"].max() == approx(40.0)
    assert data.exists()


def test_rerun_is_byte_identical(tmp_path):
    path = write_scenario(tmp_path, "\n[sim]\ncommand = simulate\nn = 30\nurf = 100V\nuend = 1V\n"
                          "steps = 500\nout = s.csv\n\n[t]\ncommand = tomography\nnoise = 0.02\n"
                          "out = t.csv\n")
    a = run_scenario(path, tmp_path / "a", echo=lambda s: None)
    b = run_scenario(path, tmp_path / "b", echo=lambda s: None)
    for name in ("s.csv", "t.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert a.name == b.name


# --- plots -----------------------------------------------------------------------------


def test_plot_deterministic(tmp_path, capsys):
    x = np.arange(8.0)
    data = write_csv(tmp_path / "d.csv", ["Cp_pF", "x0_um"], zip(x, 0.26 * x + 0.01))
    for name in ("a.svg", "b.svg"):
        assert run(capsys, "plot", data, "--out", tmp_path / name)[0] == 0
    a, b = (tmp_path / "a.svg").read_bytes(), (tmp_path / "b.svg").read_bytes()
    assert a == b and a.startswith(b"<?xml")


def test_plot_histogram(tmp_path, capsys):
    data = write_csv(tmp_path / "h.csv", ["r_m", "count"], [[0, 1], [2e-6, 4], [4e-6, 0]])
    assert run(capsys, "plot", data, "--kind", "histogram", "--out", tmp_path / "h.svg")[0] == 0
    bad = write_csv(tmp_path / "b.csv", ["r", "n"], [[0, 1]])
    assert run(capsys, "plot", bad, "--kind", "histogram", "--out", tmp_path / "x.svg")[0] == 2


def test_plot_empty_csv(tmp_path, capsys):
    data = write_csv(tmp_path / "e.csv", ["x", "y"], [])
    code, _, err = run(capsys, "plot", data, "--out", tmp_path / "e.svg")
    assert code == EXIT_USAGE and "no data" in err
    assert not (tmp_path / "e.svg").exists()
