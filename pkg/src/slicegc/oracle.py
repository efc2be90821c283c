"""Reference (non-incremental) semantics of parametric trace slicing.

This is the normative ground truth the incremental monitor is tested against.
It is deliberately naive: the number of induced valuations is exponential in
the trace length in the worst case (up to ``prod_x (ids bound to x + 1)``), so
it is only suitable for small traces.
"""

from __future__ import annotations

from typing import Iterable

from .spec import (
    ParametricSpec,
    TraceItem,
    Valuation,
    consistent,
    join,
    run,
    strip_garbage,
    submap,
)


def slice_trace(trace: Iterable[TraceItem], theta: Valuation) -> tuple[str, ...]:
    """Names of the events whose valuation is a submap of ``theta``, in order."""
    return tuple(ev.name for ev in strip_garbage(trace) if submap(ev.valuation, theta))


def _submaps(theta: Valuation) -> Iterable[Valuation]:
    items = theta.items_tuple
    for mask in range(1 << len(items)):
        yield Valuation(items[i] for i in range(len(items)) if mask >> i & 1)


def induced_valuations(trace: Iterable[TraceItem]) -> set[Valuation]:
    events = strip_garbage(trace)
    observed = {ev.valuation for ev in events}
    if not observed:
        return set()

    # join-closure of observed valuations
    closure = set(observed)
    frontier = list(observed)
    while frontier:
        new = []
        for a in frontier:
            for b in list(closure):
                if consistent(a, b):
                    j = join(a, b)
                    if j not in closure:
                        closure.add(j)
                        new.append(j)
        frontier = new

    candidates = set()
    for theta in closure:
        candidates.update(_submaps(theta))

    bindings = {pair for v in observed for pair in v.items_tuple}
    return {
        theta
        for theta in candidates
        if any(submap(v, theta) for v in observed)
        and all(pair in bindings for pair in theta.items_tuple)
    }


def slices(trace: Iterable[TraceItem]) -> dict[Valuation, tuple[str, ...]]:
    trace = strip_garbage(trace)
    return {theta: slice_trace(trace, theta) for theta in induced_valuations(trace)}


def accepts(spec: ParametricSpec, trace: Iterable[TraceItem]) -> bool:
    return all(v for v in verdicts(spec, trace).values())


def verdicts(spec: ParametricSpec, trace: Iterable[TraceItem]) -> dict[Valuation, bool]:
    """Acceptance of every induced slice, keyed by valuation."""
    trace = strip_garbage(trace)
    for ev in trace:
        spec.check_event(ev)
    return {
        theta: spec.is_accepting(run(spec, names)) for theta, names in slices(trace).items()
    }
