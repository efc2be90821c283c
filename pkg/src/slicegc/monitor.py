"""Incremental parametric trace slicing.

One pass over the trace keeps a map from valuations to automaton states.
For every event ``e(theta)`` the stored valuations are visited from biggest
to smallest; an entry ``t`` consistent with ``theta`` is stepped when
``theta`` is a submap of ``t`` (the event belongs to its slice), otherwise
``theta | t`` is added, seeded from ``t``, if not already present.  Visiting
biggest first means a new valuation inherits the most informed slice state.

Note the direction of the relevance test: the event valuation must be a
submap of the entry.  Testing it the other way round would step the empty
valuation on every event.

When the specification carries garbage events, ``Garbage(obj)`` records step
each entry that binds ``obj`` through ``garbage_<x>`` for every variable
``x`` bound to ``obj``, and finished entries are purged with their verdicts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .garbage import StateClass, classify_states, purge
from .spec import (
    EMPTY,
    Allocation,
    Garbage,
    MalformedEvent,
    ParametricEvent,
    ParametricSpec,
    StateId,
    TraceItem,
    Valuation,
    Verdict,
    consistent,
    join,
    step,
    submap,
)

log = logging.getLogger(__name__)


class LookupStore:
    """Valuation -> state map, iterated biggest valuation first."""

    def __init__(self, initial: StateId):
        self._entries: dict[Valuation, StateId] = {EMPTY: initial}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, theta: object) -> bool:
        return theta in self._entries

    def __getitem__(self, theta: Valuation) -> StateId:
        return self._entries[theta]

    def __setitem__(self, theta: Valuation, state: StateId) -> None:
        self._entries[theta] = state

    def __iter__(self) -> Iterator[Valuation]:
        return iter(sorted(self._entries, key=Valuation.sort_key))

    def remove(self, theta: Valuation) -> None:
        if theta == EMPTY:
            raise ValueError("the empty valuation is never removed")
        del self._entries[theta]

    def items(self) -> list[tuple[Valuation, StateId]]:
        return [(k, self._entries[k]) for k in self]


@dataclass
class MonitorSession:
    spec: ParametricSpec
    anticipate: bool = True
    store: LookupStore = field(init=False)
    emitted: dict[Valuation, Verdict] = field(default_factory=dict)
    # purged entries whose joins must not be re-seeded from smaller entries
    tombstones: dict[Valuation, Verdict] = field(default_factory=dict)
    retired: set[int] = field(default_factory=set)
    index: int = 0
    peak_store: int = 1
    purges: int = 0
    garbage_events: int = 0
    unsound_events: int = 0
    classes: dict[StateId, StateClass] = field(init=False)

    def __post_init__(self) -> None:
        self.store = LookupStore(self.spec.initial)
        self.classes = classify_states(self.spec)

    # -- helpers

    def _settle(self, theta: Valuation, out: list[tuple[Valuation, Verdict]]) -> None:
        if not self.anticipate or theta in self.emitted:
            return
        verdict = self.classes[self.store[theta]].final_verdict()
        if verdict is not None:
            self.emitted[theta] = verdict
            out.append((theta, verdict))

    def _tombstone_needed(self, theta: Valuation) -> bool:
        """Can some future event still join with ``theta`` into a new valuation?"""
        garbage_names = set(self.spec.garbage_events.values())
        for name, sig in self.spec.alphabet.items():
            if name in garbage_names or not sig.params:
                continue
            if set(sig.params) <= set(theta):
                continue
            if all(theta[p] not in self.retired for p in sig.params if p in theta):
                return True
        return False

    # -- processing

    def process(self, item: TraceItem) -> list[tuple[Valuation, Verdict]]:
        self.index += 1
        out: list[tuple[Valuation, Verdict]] = []
        if isinstance(item, ParametricEvent):
            self._event(item, out)
        elif isinstance(item, Garbage):
            self._garbage(item.obj, out)
        elif isinstance(item, Allocation):
            pass
        else:
            raise MalformedEvent(f"unknown trace item {item!r}")
        if self.spec.is_garbage_spec:
            self._purge(out)
        self.peak_store = max(self.peak_store, len(self.store))
        return out

    def _event(self, ev: ParametricEvent, out: list[tuple[Valuation, Verdict]]) -> None:
        self.spec.check_event(ev)
        theta = ev.valuation
        if self.retired and any(obj in self.retired for obj in theta.values()):
            self.unsound_events += 1
            if self.unsound_events == 1:
                log.warning("event %s at index %d binds a garbage object", ev, self.index)
        sources = list(self.store._entries) + list(self.tombstones)
        sources.sort(key=Valuation.sort_key)
        blocked: set[Valuation] = set()
        touched: list[Valuation] = []
        for t in sources:
            if not consistent(theta, t):
                continue
            if t in self.tombstones:
                if not submap(theta, t):
                    j = join(theta, t)
                    if j not in self.store and j not in blocked:
                        # the join would start in a sink: it inherits the verdict
                        blocked.add(j)
                        if j not in self.emitted:
                            self.emitted[j] = self.tombstones[t]
                            out.append((j, self.tombstones[t]))
                continue
            if submap(theta, t):
                self.store[t] = step(self.spec, self.store[t], ev.name)
                touched.append(t)
            else:
                j = join(theta, t)
                if j not in self.store and j not in blocked:
                    self.store[j] = step(self.spec, self.store[t], ev.name)
                    touched.append(j)
        for t in touched:
            self._settle(t, out)

    def _garbage(self, obj: int, out: list[tuple[Valuation, Verdict]]) -> None:
        self.garbage_events += 1
        self.retired.add(obj)
        if not self.spec.is_garbage_spec:
            return
        for theta in list(self.store):
            hit = sorted(x for x, o in theta.items_tuple if o == obj)
            if not hit:
                continue
            state = self.store[theta]
            for x in hit:
                name = self.spec.garbage_events.get(x)
                if name is not None:
                    state = step(self.spec, state, name)
            self.store[theta] = state
            self._settle(theta, out)
        for t in [t for t in self.tombstones if not self._tombstone_needed(t)]:
            del self.tombstones[t]

    def _purge(self, out: list[tuple[Valuation, Verdict]]) -> None:
        for theta, verdict in purge(self.store, self.spec, self.retired):
            self.purges += 1
            if theta not in self.emitted:
                self.emitted[theta] = verdict
                out.append((theta, verdict))
            if self._tombstone_needed(theta):
                self.tombstones[theta] = self.emitted[theta]

    # -- results

    def final_verdict(self) -> bool:
        if any(v is Verdict.FINAL_FAIL for v in self.emitted.values()):
            return False
        return all(self.spec.is_accepting(s) for s in self.store._entries.values())

    def verdicts(self) -> dict[Valuation, Verdict]:
        """Current verdict of every valuation seen, stored or purged."""
        out = dict(self.emitted)
        for theta, state in self.store.items():
            if theta not in out:
                out[theta] = (
                    Verdict.ACCEPTING if self.spec.is_accepting(state) else Verdict.NOT_ACCEPTING
                )
        return out

    def verdict_for(self, theta: Valuation) -> Verdict | None:
        """Verdict for ``theta`` even if it was never materialised.

        Falls back to the biggest known valuation below ``theta``; a join that
        was blocked by a purged entry inherits that entry's final verdict.
        """
        known = self.verdicts()
        if theta in known:
            return known[theta]
        below = sorted((k for k in known if submap(k, theta)), key=Valuation.sort_key)
        return known[below[0]] if below else None


def process_event(session: MonitorSession, ev: TraceItem) -> list[tuple[Valuation, Verdict]]:
    return session.process(ev)


def final_verdict(session: MonitorSession) -> bool:
    return session.final_verdict()


def monitor_trace(
    spec: ParametricSpec,
    trace: Iterable[TraceItem],
    *,
    skip_foreign: bool = False,
    session: MonitorSession | None = None,
) -> tuple[bool, list[tuple[Valuation, Verdict, int]]]:
    """Run a whole trace; anticipated verdicts carry the 1-based trace index.

    With ``skip_foreign`` events outside the alphabet are ignored but still
    counted in the indices.
    """
    session = session or MonitorSession(spec)
    anticipated = []
    for item in trace:
        if skip_foreign and isinstance(item, ParametricEvent) and item.name not in spec.alphabet:
            session.index += 1
            continue
        for theta, verdict in session.process(item):
            anticipated.append((theta, verdict, session.index))
    return session.final_verdict(), anticipated
