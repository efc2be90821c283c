import logging
import random

import pytest
from hypothesis import given

from conftest import load_log
from gen import random_spec, random_trace, seeds, with_sound_garbage
from slicegc.spec import Allocation, Garbage, event
from slicegc.tracelog import LogFormatError, read_log, write_log


def test_small_round_trip(hasnext):
    trace = [
        event("hasNextTrue", i=1),
        event("next", i=1),
        event("hasNextFalse", i=1),
        Garbage(1),
    ]
    doc = write_log(trace, hasnext.alphabet)
    assert doc.count("\n") == 4
    assert read_log(doc, hasnext.alphabet) == trace
    assert write_log(read_log(doc, hasnext.alphabet), hasnext.alphabet) == doc


def test_empty():
    assert write_log([]) == ""
    assert read_log("") == []
    assert read_log("# only a comment\n\n") == []


def test_positional_binding():
    (ev,) = read_log("e pair 4 9\n")
    assert ev.name == "pair" and dict(ev.valuation) == {"_0": 4, "_1": 9}
    assert write_log([ev]) == "e pair 4 9\n"
    (ev,) = read_log("e tick\n")
    assert len(ev.valuation) == 0


def test_id_reuse_gets_new_identity(hasnext):
    trace = read_log(load_log("id_reuse"), hasnext.alphabet)
    first, gone, alloc, second = trace
    assert gone == Garbage(first.valuation["i"])
    assert isinstance(alloc, Allocation) and alloc.obj == second.valuation["i"]
    assert first.valuation["i"] != second.valuation["i"]


def test_id_reuse_without_allocation_warns(hasnext, caplog):
    with caplog.at_level(logging.WARNING, logger="slicegc.tracelog"):
        trace = read_log(load_log("id_reuse_unannounced"), hasnext.alphabet)
    assert "reused" in caplog.text
    objs = {x.valuation["i"] for x in trace if hasattr(x, "valuation")}
    assert len(objs) == 2


@pytest.mark.parametrize(
    "doc, line",
    [
        ("e next 1\nx 2\n", 2),
        ("e next one\n", 1),
        ("g\n", 1),
        ("g 1\ng 1\n", 2),
        ("\n\ne next 1 2\n", 3),
        ("a 1\n", 1),
        ("e\n", 1),
    ],
)
def test_malformed(hasnext, doc, line):
    with pytest.raises(LogFormatError) as exc:
        read_log(doc, hasnext.alphabet)
    assert exc.value.line == line


@given(seeds)
def test_round_trip_random(seed):
    r = random.Random(seed)
    spec = random_spec(r)
    trace = with_sound_garbage(r, random_trace(r, spec, length=15, ids=4))
    doc = write_log(trace, spec.alphabet)
    assert read_log(doc, spec.alphabet) == trace
    assert write_log(read_log(doc, spec.alphabet), spec.alphabet) == doc
