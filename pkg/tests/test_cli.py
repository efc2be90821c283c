import json

import pytest

from slicegc import corpus_path
from slicegc.cli import dispatch, invoke
from slicegc.ir import parse_program
from slicegc.spec import format_spec, parse_spec

SPEC = {n: str(corpus_path(f"{n}.spec")) for n in ("hasnext", "unsafeiter", "openclose")}
TRACES = {
    "unsafe_iter": "unsafeiter",
    "hasnext_intro": "hasnext",
    "id_reuse": "hasnext",
    "id_reuse_unannounced": "hasnext",
}


def prog(name):
    return str(corpus_path("programs", f"{name}.ir"))


def conf(name):
    return str(corpus_path("programs", f"{name}.json"))


def trace(name):
    return str(corpus_path("traces", f"{name}.log"))


def run_json(capsys, argv):
    code = dispatch(argv)
    return code, json.loads(capsys.readouterr().out)


@pytest.mark.parametrize("name, spec", TRACES.items())
def test_oracle_agrees_with_incremental(capsys, name, spec):
    a, inc = run_json(capsys, ["check-trace", "--spec", SPEC[spec], "--trace", trace(name)])
    b, orc = run_json(capsys, ["check-trace", "--spec", SPEC[spec], "--trace", trace(name),
                               "--algorithm", "oracle"])
    assert a == b
    accepting = lambda rep: {  # noqa: E731
        json.dumps(v["valuation"], sort_keys=True)
        for v in rep["verdicts"]
        if v["verdict"] in ("accepting", "final_accept") and v["valuation"]
    }
    assert accepting(inc) == accepting(orc)


def test_check_trace_exit_codes(capsys):
    assert dispatch(["check-trace", "--spec", SPEC["hasnext"], "--trace",
                     trace("hasnext_intro")]) == 0
    assert dispatch(["check-trace", "--spec", SPEC["unsafeiter"], "--trace",
                     trace("unsafe_iter")]) == 1
    assert dispatch(["check-trace", "--spec", SPEC["unsafeiter"], "--trace",
                     trace("unsafe_iter"), "--transform"]) == 1
    assert dispatch(["check-trace", "--spec", SPEC["hasnext"], "--trace", "/nonexistent"]) == 2


def test_usage_errors(tmp_path, capsys):
    assert dispatch([]) == 2
    assert dispatch(["frobnicate"]) == 2
    assert dispatch(["reach"]) == 2
    bad = tmp_path / "bad.spec"
    bad.write_text("name X\nstates 1\n")
    assert dispatch(["reach", "--spec", str(bad)]) == 2
    badlog = tmp_path / "bad.log"
    badlog.write_text("e next 1\nz\n")
    assert dispatch(["check-trace", "--spec", SPEC["hasnext"], "--trace", str(badlog)]) == 2
    badir = tmp_path / "bad.ir"
    badir.write_text("method main( {\n")
    assert dispatch(["analyze", "--program", str(badir)]) == 2
    assert "error" in capsys.readouterr().err


def test_reach_flags_dead_state(capsys):
    code, rep = run_json(capsys, ["reach", "--spec", SPEC["openclose"]])
    assert code == 0
    assert rep["states"]["3"]["reach_accepting"] is False
    assert rep["states"]["3"]["anticipated"] == "final_fail"
    assert rep["states"]["1"]["anticipated"] is None


def test_transform_spec_reparses(tmp_path, capsys):
    assert dispatch(["transform-spec", "--spec", SPEC["hasnext"]]) == 0
    gspec = parse_spec(capsys.readouterr().out)
    assert gspec.garbage_events
    out = tmp_path / "g.spec"
    assert dispatch(["transform-spec", "--spec", SPEC["hasnext"], "--out", str(out)]) == 0
    assert format_spec(parse_spec(out.read_text())) == format_spec(gspec)


def test_analyze_and_instrument(tmp_path, capsys):
    code, rep = run_json(capsys, ["analyze", "--program", prog("write_tmp")])
    assert code == 0 and rep["analyzer"]["free_points"] >= 1
    assert dispatch(["instrument", "--program", prog("write_tmp")]) == 0
    text = capsys.readouterr().out
    assert "free tmp __free_tmp" in text
    parse_program(text)
    out = tmp_path / "a.json"
    assert dispatch(["analyze", "--program", prog("write_tmp"), "--out", str(out)]) == 0
    assert "write" in json.loads(out.read_text())["methods"]


def test_unknown_callee_annotations(tmp_path, capsys):
    src = tmp_path / "p.ir"
    src.write_text("method main() {\n  x = new A @a\n  y = call ext(x) @c\n  return\n}\n")
    assert dispatch(["analyze", "--program", str(src)]) == 0
    capsys.readouterr()
    ann = tmp_path / "ann.json"
    ann.write_text(json.dumps({"ext": {"params": ["p"], "pairs": [], "factory": False}}))
    code, rep = run_json(capsys, ["analyze", "--program", str(src), "--annotations", str(ann)])
    assert code == 0 and rep["analyzer"]["escaping_sites"] == 0
    ann.write_text("{not json")
    assert dispatch(["analyze", "--program", str(src), "--annotations", str(ann)]) == 2


def test_run_writes_log(tmp_path, capsys):
    out = tmp_path / "t.log"
    assert dispatch(["run", "--program", prog("iterator_loop"), "--seed", "3",
                     "--spec", SPEC["hasnext"], "--out", str(out)]) == 0
    again = tmp_path / "u.log"
    dispatch(["run", "--program", prog("iterator_loop"), "--seed", "3",
              "--spec", SPEC["hasnext"], "--out", str(again)])
    assert out.read_text() == again.read_text()
    assert dispatch(["run", "--program", prog("iterator_loop"), "--entry", "nope"]) == 2


def test_monitor_run_write_to_file(capsys):
    code, rep = run_json(capsys, ["monitor-run", "--program", prog("write_to_file"),
                                  "--config", conf("write_to_file"), "--spec",
                                  SPEC["openclose"], "--seed", "1", "--report-anticipated"])
    assert code == 1
    first = rep["first_anticipated_failure"]
    assert first is not None and first < rep["baseline_failure"]
    assert rep["anticipation_delta"] == rep["baseline_failure"] - first
    assert rep["anticipated"][0]["verdict"] == "final_fail"
    code, plain = run_json(capsys, ["monitor-run", "--program", prog("write_to_file"),
                                    "--config", conf("write_to_file"), "--spec",
                                    SPEC["openclose"], "--seed", "1", "--no-garbage"])
    assert code == 1 and plain["first_anticipated_failure"] is None
    assert plain["garbage_events"] == 0


def test_monitor_run_accepts_and_writes_trace(tmp_path, capsys):
    out = tmp_path / "t.log"
    code, rep = run_json(capsys, ["monitor-run", "--program", prog("open_close"),
                                  "--config", conf("open_close"), "--spec",
                                  SPEC["openclose"], "--seed", "1", "--trace-out", str(out)])
    assert code == 0 and rep["verdict"] == "accept"
    assert rep["garbage_events"] >= 1
    assert out.exists()


def test_breach_exit_code(tmp_path, capsys):
    src = tmp_path / "p.ir"
    src.write_text("method main() {\n  x = new A @a\n  y = x\n  free a y\n  emit open(x)\n}\n")
    assert dispatch(["run", "--program", str(src)]) == 3


def test_invoke_returns_report():
    code, rep, command = invoke(["reach", "--spec", SPEC["hasnext"]])
    assert (code, command) == (0, "reach") and "states" in rep.extra
