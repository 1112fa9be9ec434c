import json
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stoclaw.cli import emit_config, main, parse_config
from stoclaw.cli.config import emit_exact, parse_polynomial, parse_value
from stoclaw.errors import ParseError, ValidationError
from stoclaw.lattice import ExactScalar, FluxPoly

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BURGERS_TEXT = """
[simulation]
nu = 0.1
cutoff = 4
dt = 0.01
t_end = 0.2

[flux]
d = 1
A1 = "1/2 u^2"
"""


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


# -- grammar ----------------------------------------------------------------


def test_burgers_flux():
    cfg = parse_config(BURGERS_TEXT)
    assert cfg.flux() == FluxPoly.from_rows([[0, 0, Fraction(1, 2)]])


def test_named_radical_constant():
    cfg = parse_config(BURGERS_TEXT.replace('A1 = "1/2 u^2"', 'b = sqrt(5)\nA1 = "b u^2"'))
    assert cfg.flux().c(2)[0] == ExactScalar.sqrt(5)
    assert parse_value("sqrt(5)").value.as_map == {5: Fraction(1)}


@pytest.mark.parametrize("text,expected", [
    ("3/2", {1: Fraction(3, 2)}),
    ("sqrt(2)", {2: Fraction(1)}),
    ("1/2*sqrt(3)", {3: Fraction(1, 2)}),
    ("1 + sqrt(8) - sqrt(2)", {1: Fraction(1), 2: Fraction(1)}),
    ("-(2 + sqrt(3))/4", {1: Fraction(-1, 2), 3: Fraction(-1, 4)}),
])
def test_exact_literals(text, expected):
    assert parse_value(text).value.as_map == expected


def test_polynomial_terms():
    poly = parse_polynomial("u + 2 u^3 - sqrt(2)*u^2 + 7")
    assert {j: float(c) for j, c in poly.items()} == pytest.approx({0: 7, 1: 1, 2: -2 ** 0.5, 3: 2})


def test_transcendental_rejected_with_position():
    with pytest.raises(ParseError) as info:
        parse_config(BURGERS_TEXT.replace('"1/2 u^2"', '"pi u^2"'))
    assert info.value.line == 10 and info.value.column > 1
    assert "pi" in str(info.value)


@pytest.mark.parametrize("text", ["sqrt(2)*sqrt(3)", "1/sqrt(2)", "2 +", "sqrt(x)", "(1, 2"])
def test_bad_literals(text):
    with pytest.raises(ParseError):
        parse_value(text)


def test_validation_errors_carry_lines():
    bad = BURGERS_TEXT.replace("nu = 0.1", "nu = -1\ncolour = 3")
    with pytest.raises(ValidationError) as info:
        parse_config(bad)
    text = str(info.value)
    assert "line 4" in text and "colour" in text
    assert any("line 3" in e for e in info.value.errors)


def test_syntax_errors():
    with pytest.raises(ParseError):
        parse_config("nu = 0.1\n")
    with pytest.raises(ParseError):
        parse_config("[simulation\nnu = 1")
    with pytest.raises(ParseError):
        parse_config("[simulation]\nnu 1")


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.conf")), ids=lambda p: p.stem)
def test_round_trip_shipped(path):
    cfg = parse_config(path.read_text())
    assert parse_config(emit_config(cfg)) == cfg


@settings(max_examples=60)
@given(st.dictionaries(st.sampled_from([1, 2, 3, 5, 6, 7]),
                       st.fractions(min_value=-20, max_value=20, max_denominator=12), max_size=4))
def test_exact_emit_round_trip(terms):
    x = ExactScalar.from_map(terms)
    assert parse_value(emit_exact(x)).value == x


@settings(max_examples=30)
@given(st.floats(1e-3, 5), st.integers(1, 12), st.integers(0, 2 ** 64 - 1),
       st.lists(st.fractions(min_value=-3, max_value=3, max_denominator=5), min_size=1, max_size=4))
def test_config_round_trip_generated(nu, cutoff, seed, coeffs):
    poly = " + ".join(f"{c.numerator}/{c.denominator} u^{j + 1}" for j, c in enumerate(coeffs))
    text = (f"[simulation]\nnu = {nu!r}\ncutoff = {cutoff}\nseed = {seed}\n\n[flux]\nd = 1\n"
            f'A1 = "{poly}"\n\n[noise]\nmodes = [(1,), (-1,)]\namplitude = 1/3\n')
    cfg = parse_config(text)
    assert parse_config(emit_config(cfg)) == cfg


# -- subcommands --------------------------------------------------------------


def test_check_condition_holding(capsys):
    code, out, err = run(["check", "--config", CONFIGS / "product_flux.conf"], capsys)
    rec = json.loads(out)
    assert code == 0 and rec["verdict"].startswith("HOLDS_")
    assert rec["algebraically_nondegenerate"] is False
    assert "verdict" in err


def test_check_counterexample(capsys, tmp_path):
    out = tmp_path / "check.ndjson"
    code, _, _ = run(["check", "--config", CONFIGS / "y_axis_noise.conf", "--radius", 3, "--margin", 2,
                      "--out", out], capsys)
    rec = json.loads(out.read_text())
    assert code == 0 and rec["verdict"] == "VIOLATED" and rec["witness"] == [1, 0]
    assert rec["explored_radius"] == 3 and rec["margin"] == 2


def test_simulate_writes_header_and_states(capsys, tmp_path):
    out = tmp_path / "traj.ndjson"
    code, _, _ = run(["simulate", "--config", CONFIGS / "burgers.conf", "--out", out, "--seed", 3], capsys)
    lines = [json.loads(x) for x in out.read_text().splitlines()]
    assert code == 0 and lines[0]["type"] == "trajectory_header" and lines[0]["seed"] == 3
    assert [r["step"] for r in lines[1:]] == list(range(0, 101, 10))


def test_tangent_command(capsys):
    code, out, _ = run(["tangent", "--config", CONFIGS / "burgers.conf"], capsys)
    recs = [json.loads(x) for x in out.splitlines()]
    assert code == 0
    errs = [r["relative_error"] for r in recs if r["type"] == "tangent_check"]
    assert errs[0] > errs[1] > errs[2]
    assert recs[-1]["relative_gap"] <= 1e-8


def test_malliavin_command(capsys):
    code, out, _ = run(["malliavin", "--config", CONFIGS / "burgers.conf"], capsys)
    recs = [json.loads(x) for x in out.splitlines()]
    assert code == 0 and recs[1]["type"] == "gram" and recs[1]["cap_minimum"] > 0


def test_experiment_shipped_l1_fixture(capsys, tmp_path):
    out = tmp_path / "res.ndjson"
    code, _, err = run(["experiment", "l1_contraction", "--config", CONFIGS / "l1_contraction.conf",
                        "--out", out], capsys)
    rec = json.loads(out.read_text())
    assert code == 0, err
    assert rec["verdict"] == "PASS" and rec["statistics"]["violations"] == 0
    assert Path(rec["raw_series"]).exists()
    assert set(rec["statistics"]["observables"]) == {"l2", "mode:1"}


def test_experiment_fail_exit_and_report(capsys, tmp_path):
    conf = tmp_path / "perp.conf"
    conf.write_text("""
[simulation]
nu = 0.1
cutoff = 3
dt = 0.02
t_end = 2
seed = 1

[flux]
d = 2
A1 = "u^2"
A2 = "u^2"

[noise]
modes = [(1, 0), (-1, 0), (0, 1), (0, -1), (2, 0), (-2, 0), (0, 2), (0, -2)]
amplitude = 1/2

[experiment]
name = perp_decay

[params]
k_star = (1, 0)
""")
    out = tmp_path / "res.ndjson"
    code, _, err = run(["experiment", "perp_decay", "--config", conf, "--out", out], capsys)
    assert code == 1 and "FAIL" in err
    code, _, _ = run(["experiment", "energy_identity", "--out", out], capsys)
    assert code == 0
    csv_path = tmp_path / "summary.csv"
    code, _, _ = run(["report", out, "--out", csv_path], capsys)
    rows = csv_path.read_text().splitlines()
    assert code == 0 and rows[0].startswith("name,verdict,seed,config_hash,diagnostic")
    assert rows[1].startswith("perp_decay,FAIL") and rows[2].startswith("energy_identity,PASS")


def test_error_paths(capsys, tmp_path):
    code, _, err = run(["frobnicate"], capsys)
    assert code == 2 and "usage" in err
    code, _, err = run(["check", "--config", tmp_path / "missing.conf"], capsys)
    assert code == 2 and err.startswith("stoclaw: error:") and err.count("\n") == 1
    bad = tmp_path / "bad.conf"
    bad.write_text(BURGERS_TEXT.replace('"1/2 u^2"', '"pi u^2"'))
    code, _, err = run(["simulate", "--config", bad], capsys)
    assert code == 2 and "ParseError" in err and "line 10" in err
    code, _, _ = run(["check", "--config", CONFIGS / "burgers.conf", "--seed", -1], capsys)
    assert code == 2
    junk = tmp_path / "junk.ndjson"
    junk.write_text("{not json\n")
    code, _, err = run(["report", junk], capsys)
    assert code == 2 and "record 1" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "stoclaw", "check", "--config", str(CONFIGS / "product_flux.conf")],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0 and json.loads(proc.stdout)["type"] == "condition_report"
