import json

import pytest

from qcrit.cli import (
    EXIT_OK, EXIT_PHYSICS, EXIT_USAGE, UsageError, main, parse_block, parse_overrides, parse_range,
)

XY = ["--preset", "xy-fermion", "--set", "B=0.5,Gamma=1,eps=0.5,g=0.7"]


@pytest.fixture(autouse=True)
def fixed_clock(monkeypatch):
    monkeypatch.setenv("QCRIT_TIMESTAMP", "2024-01-01T00:00:00Z")
    monkeypatch.delenv("QCRIT_JOBS", raising=False)


def _read_json(path):
    return json.loads(path.read_text())


def test_overrides_and_ranges():
    assert parse_overrides(["B=0.5,Gamma=1", "g=0.3"]) == ({"B": 0.5, "Gamma": 1.0, "g": 0.3}, None)
    assert parse_overrides(["noise=on-site-fermion,eps=2"]) == ({"eps": 2.0}, "on-site-fermion")
    assert list(parse_range("0:1:3")) == [0.0, 0.5, 1.0]
    assert parse_block("2..4") == [2, 3, 4]
    for bad in (lambda: parse_overrides(["B"]), lambda: parse_range("0:1"), lambda: parse_block("5..2")):
        with pytest.raises(UsageError):
            bad()


def test_steady_writes_its_outputs(tmp_path):
    out = tmp_path / "out"
    code = main(["steady", *XY, "--grid", "256", "--rmax", "32", "--out", str(out)])
    assert code == EXIT_OK
    summary = _read_json(out / "steady_summary.json")
    assert summary["checks"] == {"residual": True, "physical": True}
    assert summary["manifest"]["timestamp"] == "2024-01-01T00:00:00Z"
    assert summary["manifest"]["model"]["source"]["preset"] == "xy-fermion"
    lines = (out / "steady_correlations.csv").read_text().splitlines()
    assert lines[0].startswith("# manifest: ")
    assert lines[1] == "r[sites],g00,g01,g10,g11"
    assert len(lines) == 2 + 65
    assert (out / "steady_symbol.csv").exists()


def test_reruns_are_byte_identical(tmp_path):
    args = ["steady", *XY, "--grid", "128", "--rmax", "16", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert main(args) == EXIT_OK
    assert {p.name: p.read_bytes() for p in tmp_path.iterdir()} == first


def test_unstable_boson_is_a_physics_flag(tmp_path):
    code = main(["steady", "--preset", "boson-hopping", "--set", "g=-0.5", "--grid", "64", "--rmax", "8",
                 "--out", str(tmp_path)])
    assert code == EXIT_PHYSICS
    summary = _read_json(tmp_path / "steady_summary.json")
    assert summary["flag"] == "UnstableSteadyStateError"
    assert len(summary["momenta"]) == 64


@pytest.mark.parametrize("argv", [
    ["steady", "--grid", "64"],
    ["sweep", *XY, "--range", "0.1:0.1:5"],
    ["steady", "--preset", "xy-fermion", "--set", "nonsense=1"],
    ["steady", "--preset", "xy-fermion", "--set", "noise=on-site-boson"],
    ["bogus"],
])
def test_usage_errors(tmp_path, argv):
    if argv[0] != "bogus":
        argv = argv + ["--out", str(tmp_path)]
    assert main(argv) == EXIT_USAGE


def test_poles_without_poles_in_the_strip(tmp_path):
    code = main(["poles", "--preset", "boson-hopping", "--set", "v=100", "--im-cap", "3", "--out", str(tmp_path)])
    assert code == EXIT_OK
    report = _read_json(tmp_path / "poles_report.json")
    assert report["no_poles"] is True
    assert report["poles"] == []


def test_poles_lists_the_fermionic_pole(tmp_path):
    assert main(["poles", *XY, "--out", str(tmp_path)]) == EXIT_OK
    report = _read_json(tmp_path / "poles_report.json")
    assert any(p["condition"] == "cross-branch" and not p["removable"] for p in report["poles"])
    assert (tmp_path / "poles_list.csv").exists()


def test_sweep_fits_the_fermionic_exponent(tmp_path):
    code = main(["sweep", *XY, "--range", "0.05:0.3:10", "--gc-hint", "0", "--grid", "256", "--rmax", "32",
                 "--no-tail", "--jobs", "2", "--out", str(tmp_path)])
    assert code == EXIT_OK
    fit = _read_json(tmp_path / "sweep_fit.json")
    assert fit["points"] == 10 and fit["flagged"] == 0
    assert fit["fit"]["exponent"] == pytest.approx(1.0, abs=0.05)
    assert fit["fit"]["window"] == pytest.approx([0.05 - fit["fit"]["g_c"], 0.3 - fit["fit"]["g_c"]])
    assert fit["slowing_down"]["inf_tau_over_xi"] > 0
    assert fit["slowing_down"]["bounded_below"] is True
    rows = (tmp_path / "sweep_points.csv").read_text().splitlines()[2:]
    assert len(rows) == 10
    assert all(float(row.split(",")[3]) > 0 for row in rows)


def test_negativity_scan(tmp_path):
    code = main(["negativity", "--preset", "boson-hopping", "--set", "v=2", "--chain-length", "12",
                 "--block", "2..4", "--grid", "256", "--out", str(tmp_path)])
    assert code == EXIT_OK
    summary = _read_json(tmp_path / "negativity_summary.json")
    assert summary["bound_chain_holds"] is True
    assert [row["size"] for row in summary["rows"]] == [2, 3, 4]


def test_negativity_blocks_must_fit(tmp_path):
    assert main(["negativity", "--preset", "boson-hopping", "--chain-length", "8", "--block", "2..8",
                 "--out", str(tmp_path)]) == EXIT_USAGE


def test_oracle_modes(tmp_path):
    assert main(["oracle", *XY, "--L", "32", "--out", str(tmp_path)]) == EXIT_OK
    assert _read_json(tmp_path / "oracle_report.json")["mode"] == "compare"
    assert main(["oracle", "--exact", "--L", "3", "--preset", "xy-fermion",
                 "--set", "B=0.5,Gamma=1,eps=0.5,g=0.9", "--out", str(tmp_path)]) == EXIT_OK
    report = _read_json(tmp_path / "oracle_report.json")
    assert report["mode"] == "exact" and report["ok"] is True
    assert main(["oracle", "--exact", "--L", "3", "--preset", "boson-hopping", "--out", str(tmp_path)]) == EXIT_USAGE


def test_evolve_approaches_steady_state(tmp_path):
    code = main(["evolve", "--preset", "boson-hopping", "--set", "g=1.5707963267948966", "--grid", "64",
                 "--time", "3", "--steps", "600", "--out", str(tmp_path)])
    assert code == EXIT_OK
    summary = _read_json(tmp_path / "evolve_summary.json")
    assert summary["max_distance"] < 2 * 2 ** 0.5 * 1e-5


def test_model_commands(tmp_path, capsys):
    assert main(["model", "list"]) == EXIT_OK
    assert "xy-fermion" in capsys.readouterr().out
    assert main(["model", "validate", *XY]) == EXIT_OK
    dumped = tmp_path / "model.json"
    assert main(["model", "dump", *XY, "--output", str(dumped)]) == EXIT_OK
    code = main(["steady", "--config", str(dumped), "--set", "g=0.9", "--grid", "64", "--rmax", "8",
                 "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    summary = _read_json(tmp_path / "out" / "steady_summary.json")
    assert summary["manifest"]["model"]["spec"]["params"]["g"] == 0.9


def test_invalid_config_is_a_usage_error(tmp_path):
    config = tmp_path / "bad.json"
    config.write_text('{"statistics": "anyon"}')
    assert main(["steady", "--config", str(config), "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["steady", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE
