"""Verdict anticipation by reachability and the garbage-event transformation.

``add_garbage_events`` extends a specification with one ``garbage_<x>(x)``
event per quantified variable.  For a state ``s`` and variable ``x`` the
specification is restricted to the events that do not mention ``x`` (the
only ones that can still happen once ``x`` is garbage) and ``s`` is
classified in that restriction:

* no accepting state reachable          -> ``garbage_x`` goes to ``__fail__``
* nothing can happen any more and ``s``
  is accepting                          -> ``garbage_x`` goes to ``__accept__``
* otherwise                             -> ``garbage_x`` goes to a copy of the
  restricted component, named ``s~x``, whose states get garbage transitions
  for the variables that are still live.

A copy is kept even when every state it can reach is accepting, as long as
some event can still move it: the entry then anticipates ``FINAL_ACCEPT``
but stays in the store until its remaining objects become garbage too.

Copies are memoised on (state, set of garbage variables).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

from .spec import (
    ACCEPT_SINK,
    FAIL_SINK,
    EventSignature,
    ParametricSpec,
    Policy,
    SpecError,
    StateId,
    Valuation,
    Verdict,
    garbage_event_name,
    step,
)

if TYPE_CHECKING:
    from .monitor import LookupStore

GarbageSpec = ParametricSpec  # a ParametricSpec with non-empty ``garbage_events``


@dataclass(frozen=True)
class StateClass:
    reach_accepting: bool
    all_accepting: bool

    def final_verdict(self) -> Verdict | None:
        if not self.reach_accepting:
            return Verdict.FINAL_FAIL
        if self.all_accepting:
            return Verdict.FINAL_ACCEPT
        return None


def successors(spec: ParametricSpec, state: StateId) -> set[StateId]:
    return {step(spec, state, name) for name in spec.alphabet}


def reachable_from(spec: ParametricSpec, state: StateId) -> set[StateId]:
    seen = {state}
    todo = deque([state])
    while todo:
        s = todo.popleft()
        for t in successors(spec, s):
            if t not in seen:
                seen.add(t)
                todo.append(t)
    return seen


def classify_state(spec: ParametricSpec, state: StateId) -> StateClass:
    reach = reachable_from(spec, state)
    acc = [spec.is_accepting(s) for s in reach]
    return StateClass(reach_accepting=any(acc), all_accepting=all(acc))


def inert(spec: ParametricSpec, state: StateId) -> bool:
    """True when no event of ``spec`` can be observed in ``state``."""
    if state in (FAIL_SINK, ACCEPT_SINK):
        return True
    if any((state, name) in spec.transitions for name in spec.alphabet):
        return False
    return not spec.alphabet or spec.policy_of(state) is Policy.SKIP


def classify_states(spec: ParametricSpec) -> dict[StateId, StateClass]:
    return {s: classify_state(spec, s) for s in spec.all_states()}


def restrict(spec: ParametricSpec, var: str | frozenset[str] | set[str]) -> ParametricSpec:
    """Drop every event that mentions ``var`` (or any variable of a set).

    Dropped events leave the alphabet entirely, so they are unobservable in
    the result rather than routed to failure.
    """
    drop = {var} if isinstance(var, str) else set(var)
    unknown = drop - spec.quantified_vars
    if unknown:
        raise SpecError(f"unknown variable(s) {sorted(unknown)}")
    alphabet = {n: sig for n, sig in spec.alphabet.items() if not drop & set(sig.params)}
    trans = {k: v for k, v in spec.transitions.items() if k[1] in alphabet}
    return ParametricSpec(
        alphabet=alphabet,
        states=spec.states,
        initial=spec.initial,
        accepting=spec.accepting,
        transitions=trans,
        policy=dict(spec.policy),
        name=spec.name,
        garbage_events={x: n for x, n in spec.garbage_events.items() if n in alphabet},
    )


def copy_name(state: StateId, dead: frozenset[str]) -> StateId:
    if not dead or state in (FAIL_SINK, ACCEPT_SINK):
        return state
    return f"{state}~{'+'.join(sorted(dead))}"


def add_garbage_events(spec: ParametricSpec) -> GarbageSpec:
    if spec.is_garbage_spec:
        raise SpecError("specification already has garbage events")
    variables = sorted(spec.quantified_vars)
    alphabet = dict(spec.alphabet)
    garbage_events = {}
    for x in variables:
        name = garbage_event_name(x)
        if name in alphabet:
            raise SpecError(f"event name {name!r} clashes with the reserved garbage event")
        alphabet[name] = EventSignature(name, (x,))
        garbage_events[x] = name

    restricted: dict[frozenset[str], ParametricSpec] = {}
    classes: dict[frozenset[str], dict[StateId, StateClass]] = {}

    def restriction(dead: frozenset[str]) -> ParametricSpec:
        if dead not in restricted:
            restricted[dead] = restrict(spec, dead) if dead else spec
        return restricted[dead]

    def classification(dead: frozenset[str], state: StateId) -> StateClass:
        table = classes.setdefault(dead, {})
        if state not in table:
            table[state] = classify_state(restriction(dead), state)
        return table[state]

    states: list[StateId] = []
    accepting: set[StateId] = set()
    policy: dict[StateId, Policy] = {}
    trans: dict[tuple[StateId, str], StateId] = {}
    seen: set[tuple[StateId, frozenset[str]]] = set()
    todo: deque[tuple[StateId, frozenset[str]]] = deque()

    def visit(state: StateId, dead: frozenset[str]) -> StateId:
        name = copy_name(state, dead)
        if state in (FAIL_SINK, ACCEPT_SINK):
            return name
        if (state, dead) not in seen:
            seen.add((state, dead))
            todo.append((state, dead))
        return name

    for s in spec.states:
        visit(s, frozenset())
    while todo:
        s, dead = todo.popleft()
        here = copy_name(s, dead)
        states.append(here)
        if spec.is_accepting(s):
            accepting.add(here)
        policy[here] = spec.policy_of(s)
        r = restriction(dead)
        for ev in r.alphabet:
            target = r.transitions.get((s, ev))
            if target is not None:
                trans[(here, ev)] = visit(target, dead)
        for x in variables:
            if x in dead:
                continue
            grown = dead | {x}
            cls = classification(grown, s)
            if not cls.reach_accepting:
                target = FAIL_SINK
            elif inert(restriction(grown), s):
                target = ACCEPT_SINK
            else:
                target = visit(s, grown)
            trans[(here, garbage_events[x])] = target

    # originals first, in declaration order, then copies in discovery order
    originals = [s for s in spec.states if s in states]
    copies = [s for s in states if s not in spec.states]
    all_states = originals + copies + [ACCEPT_SINK, FAIL_SINK]
    accepting.add(ACCEPT_SINK)
    policy[ACCEPT_SINK] = Policy.SKIP
    policy[FAIL_SINK] = Policy.FAIL
    return ParametricSpec(
        alphabet=alphabet,
        states=tuple(all_states),
        initial=spec.initial,
        accepting=frozenset(accepting),
        transitions=trans,
        policy=policy,
        name=spec.name,
        garbage_events=garbage_events,
    )


def sink_verdict(state: StateId) -> Verdict | None:
    if state == ACCEPT_SINK:
        return Verdict.FINAL_ACCEPT
    if state == FAIL_SINK:
        return Verdict.FINAL_FAIL
    return None


def purge(
    store: "LookupStore",
    gspec: GarbageSpec,
    retired: set[int] | frozenset[int] = frozenset(),
) -> list[tuple[Valuation, Verdict]]:
    """Remove finished entries from ``store`` in place and return their verdicts.

    An entry is finished when it sits in a sink, or when every object it
    binds is retired and its state is definite in the specification
    restricted by all of its variables.  Entries with every object retired
    but an undecided state stay: joins with them can still evolve.
    Every removed entry yields its final verdict; nothing is dropped silently.
    """
    out: list[tuple[Valuation, Verdict]] = []
    for theta in list(store):
        if not theta:
            continue
        state = store[theta]
        verdict = sink_verdict(state)
        if verdict is None and all(obj in retired for obj in theta.values()):
            verdict = _retired_verdict(gspec, state.split("~", 1)[0], frozenset(theta))
        if verdict is not None:
            store.remove(theta)
            out.append((theta, verdict))
    return out


@lru_cache(maxsize=256)
def _retired_verdict(gspec: GarbageSpec, base: StateId, variables: frozenset[str]) -> Verdict | None:
    plain = _plain_part(gspec)
    if base not in plain.states:
        return None
    variables = variables & plain.quantified_vars
    r = restrict(plain, variables) if variables else plain
    return classify_state(r, base).final_verdict()


@lru_cache(maxsize=32)
def _plain_part(gspec: GarbageSpec) -> ParametricSpec:
    names = set(gspec.garbage_events.values())
    alphabet = {n: s for n, s in gspec.alphabet.items() if n not in names}
    states = tuple(s for s in gspec.states if "~" not in s and s not in (ACCEPT_SINK, FAIL_SINK))
    return ParametricSpec(
        alphabet=alphabet,
        states=states,
        initial=gspec.initial,
        accepting=frozenset(s for s in gspec.accepting if s in states),
        transitions={
            k: v for k, v in gspec.transitions.items() if k[1] in alphabet and k[0] in states
        },
        policy={s: gspec.policy_of(s) for s in states},
        name=gspec.name,
    )
