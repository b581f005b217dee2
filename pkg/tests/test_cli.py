import csv
import json
import re

import numpy as np
import pytest

from fxtcor import cli, dos, scenario


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_verify_reports_and_flags(capsys):
    code, out, _ = run(capsys, "verify", "paper")
    assert "c1 = 1.22229" in out and "c3 = 1.07741" in out and "c4 = 2" in out
    assert "4) FAIL" in out and "dos_budget = FAIL" in out
    assert code == cli.EXIT_FAIL


def test_verify_is_stable(capsys):
    assert run(capsys, "verify", "paper")[1] == run(capsys, "verify", "paper")[1]


def write_variant(tmp_path, **changes):
    doc = scenario.parse(scenario.read_text("paper"))
    for path, value in changes.items():
        sec, key = path.split("__")
        doc[sec][key] = value
    p = tmp_path / "variant.scenario"
    p.write_text(scenario.render(doc))
    return p


def test_verify_condition_two_on_short_attack_ratio(tmp_path, capsys):
    p = write_variant(tmp_path, dos__p_d=1.01)
    code, out, _ = run(capsys, "verify", str(p))
    assert code == cli.EXIT_FAIL and "2) FAIL" in out


def test_input_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.scenario"
    bad.write_text('{\n  "name": "x",\n  ]\n')
    code, _, err = run(capsys, "verify", str(bad))
    assert code == cli.EXIT_INPUT and "line 3" in err
    p = write_variant(tmp_path, observer__delta=[-1.0, 6.0, 6.0])
    code, _, err = run(capsys, "verify", str(p))
    assert code == cli.EXIT_INPUT and "observer.delta" in err
    assert run(capsys, "verify", str(tmp_path / "missing.scenario"))[0] == cli.EXIT_INPUT


def test_simulate_needs_force_when_certificate_fails(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "paper", "--out", str(tmp_path), "--horizon", "0.1")
    assert code == cli.EXIT_FAIL and "--force" in err
    assert not (tmp_path / "trace.csv").exists()


def documented_patterns():
    help_text = cli.build_parser()._subparsers._group_actions[0].choices["simulate"].format_help()
    block = help_text.split("trace.csv columns")[1]
    return [line.split()[0] for line in block.splitlines()[2:] if line.strip()]


def pattern_regex(p):
    return re.compile("^" + re.sub(r"<[iskc]>", r"\\d+", p) + "$")


def test_simulate_writes_documented_columns_and_plots(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "paper", "--out", str(tmp_path), "--horizon", "0.5", "--force",
                       "--plots")
    assert code == cli.EXIT_OK
    assert "[metrics]" in out and "[analysis]" in out
    with open(tmp_path / "trace.csv") as f:
        rows = list(csv.reader(f))
    header = rows[0]
    assert len(rows) == 502 and all(len(r) == len(header) for r in rows)
    patterns = documented_patterns()
    assert len(patterns) == len(cli.TRACE_COLUMNS)
    for p in patterns:
        assert any(pattern_regex(p).match(h) for h in header), p
    for h in header:
        assert any(pattern_regex(p).match(h) for p in patterns), h
    assert header == cli.trace_header(4, 3, 2, 4)
    data = np.array(rows[1:], dtype=float)
    assert data[0, 0] == 0.0 and data[-1, 0] == 0.5
    for name in ("estimation-errors.svg", "regulated-outputs.svg", "theta-hat.svg", "control-signals.svg"):
        assert (tmp_path / name).read_text().lstrip().startswith("<?xml")
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert len(m["peak_u"]) == 4
    assert "[metrics]" in (tmp_path / "summary.txt").read_text()


def test_simulate_seed_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        run(capsys, "simulate", "paper-random", "--seed", "3", "--out", str(d), "--horizon", "0.2", "--force")
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()


def test_numerical_failure_exit_3(tmp_path, capsys):
    p = write_variant(tmp_path, exosystem__S=[[800.0, 0.0], [0.0, 800.0]])
    code, _, err = run(capsys, "simulate", str(p), "--out", str(tmp_path), "--horizon", "1", "--force")
    assert code == cli.EXIT_NUMERIC and "numerical failure" in err


def test_compare_observers_writes_pair(tmp_path, capsys):
    code, out, _ = run(capsys, "compare-observers", "paper", "--out", str(tmp_path), "--horizon", "5",
                       "--checkpoints", "1", "5")
    assert code == cli.EXIT_OK
    lines = (tmp_path / "comparison.csv").read_text().splitlines()
    assert lines[0] == "t,fixed_time,exponential" and len(lines) == 3
    fixed, expo = map(float, lines[2].split(",")[1:])
    assert fixed < expo
    assert (tmp_path / "observer-fixed-time.svg").exists() and (tmp_path / "observer-exponential.svg").exists()


def test_attack_gen(tmp_path, capsys):
    args = ["attack-gen", "--p-d", "4", "--nu-d", "0.1", "--horizon", "20", "--seed", "9"]
    code, out, _ = run(capsys, *args)
    assert code == cli.EXIT_OK
    assert run(capsys, *args)[1] == out
    frag = json.loads(out)["dos"]
    s = dos.DosSchedule({(e["i"], e["j"]): tuple(map(tuple, e["intervals"])) for e in frag["edges"]},
                        frag["p_d"], frag["nu_d"], frag["horizon"])
    assert dos.check_duration_budget(s).ok and any(s.edges.values())
    # the fragment drops into a scenario and verifies its budget
    doc = scenario.parse(scenario.read_text("paper")) | {"dos": frag | {"horizon": 60.0}}
    doc["sim"]["horizon"] = 20.0
    rep_text = tmp_path / "gen.scenario"
    rep_text.write_text(scenario.render(doc))
    _, vout, _ = run(capsys, "verify", str(rep_text))
    assert "dos_budget = ok" in vout
    code, out, _ = run(capsys, "attack-gen", "--p-d", "4", "--nu-d", "0.1", "--horizon", "20", "--mean-on", "0",
                       "--out", str(tmp_path / "empty.json"))
    frag = json.loads((tmp_path / "empty.json").read_text())["dos"]
    assert code == cli.EXIT_OK and all(e["intervals"] == [] for e in frag["edges"])


def test_attack_gen_bad_ratio(capsys):
    code, _, err = run(capsys, "attack-gen", "--p-d", "0.5", "--nu-d", "0.1", "--horizon", "20")
    assert code == cli.EXIT_INPUT and "p_d" in err


@pytest.mark.parametrize("argv", [["--help"], ["simulate", "--help"]])
def test_help_exits_cleanly(argv, capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(argv)
    assert info.value.code == 0
