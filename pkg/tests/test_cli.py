import argparse
import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from guide_spectra import __version__
from guide_spectra.cli import build_parser, main

PI = repr(math.pi)
ROOT = Path(__file__).resolve().parents[1]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_spectrum_json(capsys):
    code, out, _ = run(capsys, "spectrum", "--a", "1", "--b", "0.3", "--ell", PI, "--n-max", "40")
    assert code == 0
    doc = json.loads(out)
    assert doc["version"] == __version__ and doc["config"]["n_max"] == 40
    assert len(doc["result"]["eigenvalues"]) >= 80
    assert doc["result"]["gap"]["gamma1"] > 0


def test_spectrum_decoupled_integers(capsys):
    code, out, _ = run(capsys, "spectrum", "--a", "0", "--b", "0", "--ell", PI)
    lams = [e["re_lambda"] for e in json.loads(out)["result"]["eigenvalues"]]
    assert code == 0 and lams == [float(n * n) for n in range(11)]


def test_spectrum_is_byte_stable(capsys):
    _, first, _ = run(capsys, "spectrum", "--a", "2", "--b", "1")
    _, second, _ = run(capsys, "spectrum", "--a", "2", "--b", "1")
    assert first == second


def test_invalid_ell_exit_two(capsys):
    code, _, err = run(capsys, "spectrum", "--ell", "0")
    assert code == 2 and "ell must be > 0" in err


def test_weyl_rows_within_bounds(capsys):
    code, out, _ = run(capsys, "weyl", "--a", "1", "--b", "1", "--ell", PI, "--r-max", "1600")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 50
    for r in rows:
        assert float(r["lower_bound"]) <= int(r["N"]) <= float(r["upper_bound"])


def test_theta_table(capsys):
    code, out, _ = run(capsys, "theta", "--ell", PI, "--k-max", "4")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [int(r["k"]) for r in rows] == list(range(5))
    assert all(float(r["phi_abs"]) < 1e-10 for r in rows)


def test_riesz_json(capsys, tmp_path):
    gram = tmp_path / "g.csv"
    code, out, _ = run(capsys, "riesz", "--n", "20", "--gram-csv", str(gram))
    res = json.loads(out)["result"]
    assert code == 0 and 0 < res["lambda_min"] <= 1 <= res["lambda_max"]
    assert len(gram.read_text().splitlines()) == 1 + 400


def test_evolve_outputs(capsys, tmp_path):
    meta = tmp_path / "meta.json"
    code, out, _ = run(capsys, "evolve", "--n-h", "200", "--dt", "0.05", "--t-end", "2",
                       "--meta", str(meta))
    assert code == 0 and out.splitlines()[0] == "t,E,boundary_term"
    m = json.loads(meta.read_text())
    assert m["result"]["energy_monotone"] and m["result"]["seed"] == 7


def test_resolvent_csv(capsys):
    code, out, _ = run(capsys, "resolvent", "--a", "0", "--b", "0", "--n-h", "400",
                       "--re-min", "-3", "--re-max", "-1", "--im-min", "0.5", "--im-max", "1",
                       "--points", "2")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 4
    for r in rows:
        assert float(r["estimate"]) * float(r["dist"]) == pytest.approx(1, rel=1e-3)


def test_crosscheck_spec_command(capsys):
    code, out, _ = run(capsys, "crosscheck", "--regime", "all", "--draws", "5", "--seed", "7")
    assert code == 0 and json.loads(out)["result"]["ok"]


def test_reference_config_mirrors_defaults():
    cfg = json.loads((ROOT / "configs" / "reference.json").read_text())
    ap = build_parser()
    subs = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    for name, parser in subs.choices.items():
        defaults = {a.dest: a.default for a in parser._actions if a.dest != "help"}
        assert cfg[name] == defaults


def test_config_file_sets_defaults(capsys, tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"spectrum": {"a": 0.0, "b": 0.0, "n_max": 6}}))
    code, out, _ = run(capsys, "--config", str(path), "spectrum")
    assert code == 0 and len(json.loads(out)["result"]["eigenvalues"]) == 7


def test_config_unknown_key(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"spectrum": {"bogus": 1}}))
    with pytest.raises(SystemExit) as exc:
        main(["--config", str(path), "spectrum"])
    assert exc.value.code == 2


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "guide_spectra.cli", "--version"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == __version__
