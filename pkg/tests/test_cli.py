from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from outstab.cli import UsageError, build_parser, parse_comparison, run


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_list_systems(capsys):
    assert run(["list-systems"]) == 0
    d = _json(capsys)
    assert d["schema_version"] == 1 and d["command"] == "list-systems"
    names = {s["name"] for s in d["systems"]}
    assert {"decoupled_linear", "example1", "example2", "adaptive_redesigned"} <= names
    assert "spike_train" in d["signals"]


def test_simulate_csv_matches_exponential(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert run(["simulate", "--system", "decoupled_linear", "--x0", "1", "--tf", "3", "--csv", str(out)]) == 0
    d = _json(capsys)
    assert d["config"]["x0"] == [1.0]
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x1", "y1"]
    t = np.array([float(r[0]) for r in rows[1:]])
    x = np.array([float(r[1]) for r in rows[1:]])
    assert t[-1] == pytest.approx(3.0)
    assert np.allclose(x, np.exp(-t), rtol=1e-6, atol=1e-9)
    assert b"\r\n" not in out.read_bytes()


def test_simulate_delay_system(capsys):
    assert run(["simulate", "--system", "example2", "--x0", "0.1,0.1", "--tf", "1"]) == 0
    assert _json(capsys)["system"] == "example2"


def test_simulate_wrong_dimension(capsys):
    assert run(["simulate", "--system", "example1", "--x0", "1"]) == 2
    assert "dimension" in capsys.readouterr().err


def test_unknown_system():
    assert run(["simulate", "--system", "nope", "--x0", "1"]) == 2


def test_certify_exit_codes(capsys):
    assert run(["certify", "--system", "example1", "--cert", "example1-thm2", "--N", "100",
                "--ntraj", "2"]) == 0
    d = _json(capsys)
    assert d["overall"] == "pass"
    assert run(["certify", "--system", "example1", "--cert", "example1-w-as-thm1", "--N", "100",
                "--ntraj", "2"]) == 1
    assert _json(capsys)["overall"] == "fail"


def test_certify_target_mismatch():
    assert run(["certify", "--system", "decoupled_linear", "--cert", "decoupled-thm1",
                "--target", "thm2"]) == 2


def test_tconv_decoupled(capsys):
    assert run(["tconv", "--system", "decoupled_linear", "--cert", "decoupled-thm1",
                "--eps", "0.1", "--R", "1"]) == 0
    assert _json(capsys)["T_analytic"] == pytest.approx(150.0, rel=0.02)


def test_sweep_requires_seed(capsys):
    assert run(["sweep", "--system", "decoupled_linear", "--eps", "0.1", "--R", "1"]) == 2
    assert "--seed" in capsys.readouterr().err


def test_sweep_csv_and_json(tmp_path, capsys):
    out, rep = tmp_path / "sweep.csv", tmp_path / "sweep.json"
    argv = ["sweep", "--system", "decoupled_linear", "--cert", "decoupled-thm1", "--eps", "0.1",
            "--R", "1", "--N", "8", "--seed", "3", "--csv", str(out), "--json", str(rep)]
    assert run(argv) == 0
    assert capsys.readouterr().out == ""
    d = json.loads(rep.read_text())
    assert d["schema_version"] == 1 and d["config"]["seed"] == 3
    assert d["verdict"] == "uniform-consistent"
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["sample_id", "x0_1", "T_emp"] and len(rows) == 9
    # same seed, same samples
    rep2 = tmp_path / "again.json"
    assert run(argv[:-1] + [str(rep2)]) == 0
    assert json.loads(rep2.read_text())["T_emp_sup"] == d["T_emp_sup"]


def test_envelope(capsys):
    assert run(["envelope", "--system", "decoupled_linear", "--radii", "0.5,1", "--times", "0,1",
                "--N", "5", "--seed", "0"]) == 0
    env = _json(capsys)["envelope"]
    assert len(env["zeta"]) == 2


def test_barbalat_catalog(capsys):
    assert run(["barbalat", "--signal", "floor", "--eps", "0.5"]) == 0
    d = _json(capsys)
    assert d["lemma"]["quc_f"][0]["quc"] is False


def test_barbalat_from_csv(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert run(["simulate", "--system", "decoupled_linear", "--x0", "1", "--tf", "20", "--csv", str(out)]) == 0
    capsys.readouterr()
    assert run(["barbalat", "--signal", str(out), "--abs", "--rho", "quadratic:1", "--dt", "0.01"]) == 0
    d = _json(capsys)
    # linear interpolation between adaptive knots overestimates the convex e^{-2t}
    assert d["lemma"]["integral"] == pytest.approx(0.5, rel=2e-3)


def test_barbalat_missing_file():
    assert run(["barbalat", "--signal", "/nonexistent.csv"]) == 2


def test_adaptive_redesigned(capsys):
    assert run(["adaptive", "--N", "50", "--ntraj", "2", "--tf", "5"]) == 0
    d = _json(capsys)
    assert d["scheme"] == "redesigned" and d["certificate"]["overall"] == "pass"


def test_adaptive_rejects_zero_L():
    assert run(["adaptive", "--L", "0"]) == 2


def test_sweep_unconverged_reports_null(capsys):
    # a too-short horizon leaves the sweep unconverged
    assert run(["sweep", "--system", "decoupled_linear", "--eps", "1e-6", "--R", "1", "--N", "2",
                "--seed", "0", "--tf", "1"]) == 0
    d = _json(capsys)
    assert d["T_emp_sup"] is None and d["verdict"] == "inconclusive"


def test_json_infinity_is_string(capsys):
    assert run(["barbalat", "--signal", "t", "--rho", "linear:1", "--eps", "0.5"]) == 0
    text = capsys.readouterr().out
    assert "Infinity" not in text and "NaN" not in text
    json.loads(text)


@pytest.mark.parametrize("text,s,val", [("linear:2", 3.0, 6.0), ("quadratic:0.5", 2.0, 2.0),
                                        ("power:1:3", 2.0, 8.0), ("capped:1:2", 5.0, 2.0)])
def test_parse_comparison(text, s, val):
    assert parse_comparison(text)(s) == pytest.approx(val)


def test_parse_comparison_rejects():
    with pytest.raises(UsageError):
        parse_comparison("cubic:1")
    with pytest.raises(UsageError):
        parse_comparison("linear:x")


def test_parser_help_lists_subcommands():
    text = build_parser().format_help()
    for cmd in ("simulate", "certify", "tconv", "sweep", "envelope", "barbalat", "adaptive"):
        assert cmd in text
