import json

import pytest
from hypothesis import HealthCheck, settings

from slicegc import corpus_path
from slicegc.ir import parse_program
from slicegc.spec import Valuation, parse_spec

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def V(**bindings):
    return Valuation(bindings)


def load_spec(name):
    return parse_spec(corpus_path(f"{name}.spec").read_text())


def load_program(name):
    return parse_program(corpus_path("programs", f"{name}.ir").read_text())


def load_config(name):
    return json.loads(corpus_path("programs", f"{name}.json").read_text())


def load_log(name):
    return corpus_path("traces", f"{name}.log").read_text()


@pytest.fixture
def hasnext():
    return load_spec("hasnext")


@pytest.fixture
def unsafeiter():
    return load_spec("unsafeiter")


@pytest.fixture
def openclose():
    return load_spec("openclose")


# ---------------------------------------------------------------------------
# acceptance summary

_criteria: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion n")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    mark = _marks.get(report.nodeid)
    if mark is not None:
        n, text = mark
        _criteria[n] = (text, report.passed)


_marks: dict[str, tuple[int, str]] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _marks[item.nodeid] = tuple(m.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        text, ok = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
