import random

from hypothesis import given

from conftest import V
from gen import random_spec, random_trace, seeds
from slicegc import oracle
from slicegc.spec import EMPTY, event

A, B, C, D = 1, 2, 3, 4

ITER_TRACE = [
    event("use", i=D),
    event("create", c=A, i=B),
    event("create", c=A, i=C),
    event("use", i=B),
    event("use", i=C),
    event("update", c=A),
    event("use", i=B),
]

INTRO = [
    event("hasNextTrue", i=1),
    event("next", i=1),
    event("hasNextTrue", i=1),
    event("hasNextTrue", i=2),
    event("next", i=2),
    event("next", i=1),
]


def test_slice_of_one_iterator():
    assert oracle.slice_trace(ITER_TRACE, V(c=A, i=B)) == ("create", "use", "update", "use")


def test_slice_of_empty_trace_and_empty_valuation():
    assert oracle.slice_trace([], V(c=A)) == ()
    assert oracle.slice_trace(ITER_TRACE, EMPTY) == ()


def test_induced_valuations():
    induced = oracle.induced_valuations(ITER_TRACE)
    assert {V(c=A, i=B), V(c=A, i=C), V(c=A, i=D)} <= induced
    assert {V(c=A), V(i=B), V(i=C), V(i=D)} <= induced
    assert EMPTY not in induced
    assert oracle.induced_valuations([]) == set()


def test_unsafe_iter_trace_rejected(unsafeiter):
    assert not oracle.accepts(unsafeiter, ITER_TRACE)
    verdicts = oracle.verdicts(unsafeiter, ITER_TRACE)
    assert verdicts[V(c=A, i=B)] is False
    assert verdicts[V(c=A, i=C)] is True


def test_intro_hasnext_accepted(hasnext):
    assert oracle.accepts(hasnext, INTRO)
    s = oracle.slices(INTRO)
    assert s[V(i=1)] == ("hasNextTrue", "next", "hasNextTrue", "next")
    assert s[V(i=2)] == ("hasNextTrue", "next")


def test_empty_trace_accepted(openclose):
    assert oracle.accepts(openclose, [])


@given(seeds)
def test_slicing_properties(seed):
    r = random.Random(seed)
    spec = random_spec(r)
    trace = random_trace(r, spec)
    induced = oracle.induced_valuations(trace)
    for k in range(len(trace)):
        prefix = trace[:k]
        assert oracle.induced_valuations(prefix) <= induced
        for theta in oracle.induced_valuations(trace[: k + 1]):
            before = oracle.slice_trace(prefix, theta)
            after = oracle.slice_trace(trace[: k + 1], theta)
            assert after[: len(before)] == before and len(after) - len(before) <= 1
    # a valuation that is not induced has an empty slice, once events
    # without parameters (which belong to every slice) are left out
    trace = [ev for ev in trace if ev.valuation]
    induced = oracle.induced_valuations(trace)
    ids = sorted({o for ev in trace for o in ev.valuation.values()} | {99})
    for x in ("x", "y"):
        for o in ids:
            theta = V(**{x: o})
            if theta not in induced:
                assert oracle.slice_trace(trace, theta) == ()
            assert len(oracle.slice_trace(trace, theta)) <= len(trace)
