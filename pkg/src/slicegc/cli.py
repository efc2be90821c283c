"""Command-line entry point.

Every subcommand prints one JSON report on stdout and a short summary on
stderr.  Exit codes: 0 accepted / success, 1 property violation, 2 usage or
input error, 3 invariant breach (a freed object was used or still reachable).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import oracle
from .analysis import AnalysisConfig, MethodSummary, UnknownMethod, analyze, instrument
from .garbage import add_garbage_events, classify_states
from .interp import ExecConfig, ExecutionError, PostFreeAccess, execute
from .ir import IRError, format_program, parse_program
from .monitor import MonitorSession, monitor_trace
from .spec import (
    FAIL_SINK,
    MalformedEvent,
    ParametricSpec,
    SpecError,
    format_spec,
    parse_spec,
    strip_garbage,
)
from .tracelog import LogFormatError, read_log, write_log

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_BREACH = 0, 1, 2, 3

log = logging.getLogger("slicegc")


class UsageError(Exception):
    pass


@dataclass
class RunReport:
    command: str
    verdict: str | None = None
    verdicts: list[dict] = field(default_factory=list)
    anticipated: list[dict] = field(default_factory=list)
    trace_length: int = 0
    first_anticipated_failure: int | None = None
    baseline_failure: int | None = None
    anticipation_delta: int | None = None
    peak_store: int | None = None
    purges: int = 0
    garbage_events: int = 0
    analyzer: dict | None = None
    execution: dict | None = None
    extra: dict = field(default_factory=dict)
    # document printed on stdout instead of the JSON report
    output: str | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k not in ("extra", "output")}
        out.update(self.extra)
        return out


# ---------------------------------------------------------------------------
# loading


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _load_spec(path: str) -> ParametricSpec:
    return parse_spec(_read(path))


def _load_program(path: str):
    return parse_program(_read(path))


def _load_annotations(path: str | None, program) -> AnalysisConfig:
    cfg = AnalysisConfig()
    if path is None:
        return cfg
    data = json.loads(_read(path))
    for name, entry in data.items():
        params = program.methods[name].params if name in program.methods else None
        cfg.annotations[name] = MethodSummary.from_json(entry, params)
    return cfg


def _exec_config(args) -> ExecConfig:
    data = {}
    if getattr(args, "config", None):
        data = json.loads(_read(args.config))
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
    cfg = ExecConfig.from_json(data)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.loop_bound is not None:
        overrides["loop_bound"] = args.loop_bound
    if args.oracle:
        overrides["oracle"] = True
    if args.entry is not None:
        overrides["entry"] = args.entry
    cfg = replace(cfg, **overrides)
    cfg.check()
    return cfg


def _write_out(path: str | None, text: str) -> None:
    if path is None or path == "-":
        return
    Path(path).write_text(text)


# ---------------------------------------------------------------------------
# monitoring helpers


def _monitor(spec: ParametricSpec, trace, report: RunReport) -> bool:
    session = MonitorSession(spec)
    ok, anticipated = monitor_trace(spec, trace, skip_foreign=True, session=session)
    report.verdict = "accept" if ok else "violation"
    report.trace_length = len(trace)
    report.peak_store = session.peak_store
    report.purges = session.purges
    report.garbage_events = session.garbage_events
    index_of = {theta: i for theta, _, i in anticipated}
    report.verdicts = [
        {"valuation": theta.to_json(), "verdict": v.value, "index": index_of.get(theta)}
        for theta, v in sorted(session.verdicts().items(), key=lambda kv: kv[0].sort_key())
    ]
    report.anticipated = [
        {"valuation": theta.to_json(), "verdict": v.value, "index": i}
        for theta, v, i in anticipated
    ]
    fails = [i for _, v, i in anticipated if v.value == "final_fail"]
    report.first_anticipated_failure = min(fails) if fails else None
    return ok


def _oracle_report(spec: ParametricSpec, trace, report: RunReport) -> bool:
    events = [e for e in strip_garbage(trace) if e.name in spec.alphabet]
    verdicts = oracle.verdicts(spec, events)
    ok = all(verdicts.values())
    report.verdict = "accept" if ok else "violation"
    report.trace_length = len(trace)
    report.verdicts = [
        {"valuation": theta.to_json(), "verdict": "accepting" if v else "not_accepting",
         "index": None}
        for theta, v in sorted(verdicts.items(), key=lambda kv: kv[0].sort_key())
    ]
    return ok


def _summary(report: RunReport) -> str:
    parts = [report.command]
    if report.verdict:
        parts.append(report.verdict)
    if report.first_anticipated_failure is not None:
        parts.append(f"first failure anticipated at {report.first_anticipated_failure}")
    if report.peak_store is not None:
        parts.append(f"peak store {report.peak_store}")
    return ", ".join(parts)


# ---------------------------------------------------------------------------
# subcommands


def cmd_check_trace(args) -> tuple[int, RunReport]:
    spec = _load_spec(args.spec)
    if args.transform:
        spec = add_garbage_events(spec)
    trace = read_log(_read(args.trace), spec.alphabet)
    report = RunReport("check-trace")
    if args.algorithm == "oracle":
        ok = _oracle_report(spec, trace, report)
    else:
        ok = _monitor(spec, trace, report)
        if not args.report_anticipated:
            report.anticipated = []
    return (EXIT_OK if ok else EXIT_VIOLATION), report


def cmd_transform_spec(args) -> tuple[int, RunReport]:
    gspec = add_garbage_events(_load_spec(args.spec))
    text = format_spec(gspec)
    report = RunReport("transform-spec")
    if args.out:
        _write_out(args.out, text)
    else:
        report.output = text
    report.extra = {"states": len(gspec.states), "transitions": len(gspec.transitions)}
    return EXIT_OK, report


def cmd_reach(args) -> tuple[int, RunReport]:
    spec = _load_spec(args.spec)
    report = RunReport("reach")
    states = {}
    for s, cls in classify_states(spec).items():
        v = cls.final_verdict()
        states[s] = {
            "reach_accepting": cls.reach_accepting,
            "all_accepting": cls.all_accepting,
            "anticipated": v.value if v else None,
            "implicit": s == FAIL_SINK,
        }
    report.extra = {"states": states}
    return EXIT_OK, report


def cmd_analyze(args) -> tuple[int, RunReport]:
    program = _load_program(args.program)
    result = analyze(program, _load_annotations(args.annotations, program))
    report = RunReport("analyze")
    report.analyzer = result.stats()
    doc = result.to_json()
    if args.out:
        _write_out(args.out, json.dumps(doc, indent=2) + "\n")
    else:
        report.extra = doc
    return EXIT_OK, report


def cmd_instrument(args) -> tuple[int, RunReport]:
    program = _load_program(args.program)
    result = analyze(program, _load_annotations(args.annotations, program))
    text = format_program(instrument(program, result))
    report = RunReport("instrument")
    if args.out:
        _write_out(args.out, text)
    else:
        report.output = text
    report.analyzer = result.stats()
    return EXIT_OK, report


def cmd_run(args) -> tuple[int, RunReport]:
    program = _load_program(args.program)
    alphabet = _load_spec(args.spec).alphabet if args.spec else None
    result = execute(program, _exec_config(args), alphabet)
    text = write_log(result.trace, alphabet)
    report = RunReport("run")
    report.execution = result.to_json()
    report.trace_length = len(result.trace)
    if args.out:
        _write_out(args.out, text)
    else:
        report.output = text
    return EXIT_OK, report


def cmd_monitor_run(args) -> tuple[int, RunReport]:
    program = _load_program(args.program)
    spec = _load_spec(args.spec)
    cfg = _exec_config(args)
    report = RunReport("monitor-run")
    if args.no_garbage:
        mspec, target = spec, program
    else:
        result = analyze(program, _load_annotations(args.annotations, program))
        report.analyzer = result.stats()
        mspec, target = add_garbage_events(spec), instrument(program, result)
    run = execute(target, cfg, mspec.alphabet)
    report.execution = run.to_json()
    ok = _monitor(mspec, run.trace, report)
    if not args.report_anticipated:
        report.anticipated = []

    # the same execution judged with the plain spec, verdict only at the end
    plain = [e for e in strip_garbage(run.trace) if e.name in spec.alphabet]
    plain_ok, _ = monitor_trace(spec, plain)
    if plain_ok != ok:
        raise InvariantBreach("garbage events changed the final verdict")
    if not plain_ok:
        report.baseline_failure = len(run.trace)
        if report.first_anticipated_failure is not None:
            report.anticipation_delta = report.baseline_failure - report.first_anticipated_failure
    if args.trace_out:
        _write_out(args.trace_out, write_log(run.trace, mspec.alphabet))
    return (EXIT_OK if ok else EXIT_VIOLATION), report


class InvariantBreach(RuntimeError):
    pass


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slicegc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check-trace", help="monitor a logged trace")
    s.add_argument("--spec", required=True)
    s.add_argument("--trace", required=True)
    s.add_argument("--algorithm", choices=["incremental", "oracle"], default="incremental")
    s.add_argument("--transform", action="store_true", help="add garbage events to the spec")
    s.add_argument("--report-anticipated", action="store_true")
    s.set_defaults(func=cmd_check_trace)

    s = sub.add_parser("transform-spec", help="add garbage events to a spec")
    s.add_argument("--spec", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_transform_spec)

    s = sub.add_parser("reach", help="classify spec states by reachable acceptance")
    s.add_argument("--spec", required=True)
    s.set_defaults(func=cmd_reach)

    for name, func, help_ in [
        ("analyze", cmd_analyze, "free-me analysis of an IR program"),
        ("instrument", cmd_instrument, "insert free statements at free points"),
    ]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--program", required=True)
        s.add_argument("--annotations", help="JSON summaries for external methods")
        s.add_argument("--out")
        s.set_defaults(func=func)

    def exec_flags(s):
        s.add_argument("--program", required=True)
        s.add_argument("--config", help="JSON execution config")
        s.add_argument("--entry")
        s.add_argument("--seed", type=int)
        s.add_argument("--loop-bound", type=int)
        s.add_argument("--oracle", action="store_true",
                       help="check frees against dynamic unreachability")

    s = sub.add_parser("run", help="execute a program and write its event log")
    exec_flags(s)
    s.add_argument("--spec", help="bind events to this spec's variables")
    s.add_argument("--out")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("monitor-run", help="analyze, instrument, execute and monitor")
    exec_flags(s)
    s.add_argument("--spec", required=True)
    s.add_argument("--annotations")
    s.add_argument("--no-garbage", action="store_true", help="monitor without garbage events")
    s.add_argument("--report-anticipated", action="store_true")
    s.add_argument("--trace-out")
    s.set_defaults(func=cmd_monitor_run)
    return p


def invoke(argv: list[str] | None = None) -> tuple[int, RunReport | None, str]:
    """Run one command; returns the exit code, the report and the command name."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return (EXIT_USAGE if exc.code else EXIT_OK), None, ""
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        code, report = args.func(args)
    except (PostFreeAccess, InvariantBreach) as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_BREACH, None, args.command
    except (UsageError, SpecError, IRError, LogFormatError, MalformedEvent, UnknownMethod,
            ExecutionError, json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE, None, args.command
    return code, report, args.command


def dispatch(argv: list[str] | None = None) -> int:
    code, report, command = invoke(argv)
    if report is None:
        return code
    if report.output is not None:
        sys.stdout.write(report.output)
    else:
        print(json.dumps(report.to_json(), indent=2))
    print(_summary(report), file=sys.stderr)
    return code


def main() -> None:
    sys.exit(dispatch())
