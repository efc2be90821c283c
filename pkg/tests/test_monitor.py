import random

import pytest
from hypothesis import given

from conftest import V
from gen import random_spec, random_trace, seeds
from slicegc import oracle
from slicegc.monitor import LookupStore, MonitorSession, monitor_trace, process_event
from slicegc.spec import EMPTY, MalformedEvent, Verdict, event, submap
from test_oracle import ITER_TRACE, INTRO

A, B = 1, 2


def test_store_order():
    store = LookupStore("1")
    store[V(i=3)] = "1"
    store[V(c=1, i=2)] = "2"
    store[V(c=1)] = "1"
    assert list(store) == [V(c=1, i=2), V(c=1), V(i=3), EMPTY]
    with pytest.raises(ValueError):
        store.remove(EMPTY)


def test_create_then_use(unsafeiter):
    s = MonitorSession(unsafeiter)
    process_event(s, event("create", c=A, i=B))
    assert s.store[V(c=A, i=B)] == "2"
    assert s.store[EMPTY] == "1"
    process_event(s, event("use", i=B))
    assert s.store[V(c=A, i=B)] == "2"
    assert s.store[V(i=B)] == "1"


def test_conflicting_event_only_joins_with_empty(unsafeiter):
    s = MonitorSession(unsafeiter)
    process_event(s, event("create", c=A, i=B))
    process_event(s, event("create", c=3, i=4))
    assert set(s.store) == {EMPTY, V(c=A, i=B), V(c=3, i=4)}


def test_malformed_event(unsafeiter):
    s = MonitorSession(unsafeiter)
    with pytest.raises(MalformedEvent):
        process_event(s, event("create", c=A))
    with pytest.raises(MalformedEvent):
        process_event(s, event("close", f=A))


def test_final_verdicts(unsafeiter, hasnext, openclose):
    ok, anticipated = monitor_trace(unsafeiter, ITER_TRACE)
    assert not ok
    assert (V(c=A, i=B), Verdict.FINAL_FAIL, 7) in anticipated
    assert monitor_trace(hasnext, INTRO)[0]
    assert monitor_trace(openclose, [])[0]


def test_openclose_verdicts(openclose):
    assert monitor_trace(openclose, [event("open", f=1), event("write", f=1)]) == (False, [])
    assert monitor_trace(openclose, [event("open", f=1), event("close", f=1)]) == (True, [])


def test_hasnext_anticipates_failure(hasnext):
    ok, anticipated = monitor_trace(hasnext, [event("next", i=1)])
    assert not ok
    assert anticipated == [(V(i=1), Verdict.FINAL_FAIL, 1)]


def test_final_verdicts_are_not_retracted(hasnext):
    s = MonitorSession(hasnext)
    first = process_event(s, event("next", i=1))
    again = process_event(s, event("hasNextTrue", i=1))
    assert first and not again
    assert s.emitted[V(i=1)] is Verdict.FINAL_FAIL


def test_skip_foreign_keeps_indices(hasnext):
    trace = [event("open", f=9), event("next", i=1)]
    assert monitor_trace(hasnext, trace, skip_foreign=True)[1][0][2] == 2


@given(seeds)
def test_agrees_with_oracle(seed):
    r = random.Random(seed)
    spec = random_spec(r)
    trace = random_trace(r, spec)
    session = MonitorSession(spec)
    ok, _ = monitor_trace(spec, trace, session=session)
    assert ok == oracle.accepts(spec, trace)
    # per valuation, for everything the oracle considers
    for theta, accepted in oracle.verdicts(spec, trace).items():
        assert session.verdict_for(theta).accepting == accepted


@given(seeds)
def test_store_growth_and_maximality(seed):
    r = random.Random(seed)
    spec = random_spec(r)
    trace = random_trace(r, spec)
    session = MonitorSession(spec)
    sizes = []
    for k, ev in enumerate(trace):
        before = dict(session.store.items())
        process_event(session, ev)
        sizes.append(len(session.store))
        for theta in set(session.store) - set(before):
            # seeded from the biggest consistent entry below it
            below = [t for t in before if submap(t, theta)]
            biggest = max(len(t) for t in below)
            assert all(len(t) <= biggest for t in below)
        assert len(session.store) <= len(oracle.induced_valuations(trace[: k + 1])) + 1
    assert sizes == sorted(sizes)
