"""Parametric events, valuations and finite-state parametric specifications.

A specification document is line oriented::

    # comments run to end of line
    name OpenClose                      # optional
    alphabet open(f) close(f) write(f)  # may be repeated
    states 1 2 3
    initial 1
    accepting 1                         # zero or more states
    policy 2 skip                       # default policy is fail
    policy * skip                       # every state at once
    trans 1 open 2                      # <from> <event> <to>
    garbage f                           # declares event garbage_f(f)

``garbage`` lines mark the document as a garbage-extended specification: each
one adds the reserved signature ``garbage_<x>(x)`` to the alphabet.  The two
sink states ``__accept__`` and ``__fail__`` may be listed in ``states`` and
used as transition targets; they are absorbing.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

log = logging.getLogger(__name__)

ObjectId = int
StateId = str

FAIL_SINK: StateId = "__fail__"
ACCEPT_SINK: StateId = "__accept__"
GARBAGE_PREFIX = "garbage_"


class SpecError(ValueError):
    """Malformed specification document or inconsistent specification."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


class MalformedEvent(ValueError):
    pass


class InconsistentValuations(ValueError):
    pass


class Policy(enum.Enum):
    SKIP = "skip"
    FAIL = "fail"


class Verdict(enum.Enum):
    ACCEPTING = "accepting"
    NOT_ACCEPTING = "not_accepting"
    FINAL_ACCEPT = "final_accept"
    FINAL_FAIL = "final_fail"

    @property
    def is_final(self) -> bool:
        return self in (Verdict.FINAL_ACCEPT, Verdict.FINAL_FAIL)

    @property
    def accepting(self) -> bool:
        return self in (Verdict.ACCEPTING, Verdict.FINAL_ACCEPT)


def garbage_event_name(var: str) -> str:
    return GARBAGE_PREFIX + var


# --------------------------------------------------------------------------
# valuations


class Valuation(Mapping[str, ObjectId]):
    """Immutable finite partial map from variables to object ids.

    Iteration is in sorted variable order, so two equal valuations always
    print, hash and compare identically.
    """

    __slots__ = ("_items", "_map", "_hash")

    def __init__(self, bindings: Mapping[str, ObjectId] | Iterable[tuple[str, ObjectId]] = ()):
        items = dict(bindings)
        self._items: tuple[tuple[str, ObjectId], ...] = tuple(sorted(items.items()))
        self._map = dict(self._items)
        self._hash = hash(self._items)

    @property
    def items_tuple(self) -> tuple[tuple[str, ObjectId], ...]:
        return self._items

    def __getitem__(self, var: str) -> ObjectId:
        return self._map[var]

    def __iter__(self) -> Iterator[str]:
        return iter(self._map)

    def __len__(self) -> int:
        return len(self._items)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Valuation):
            return self._items == other._items
        return NotImplemented

    def __repr__(self) -> str:
        return "[" + ", ".join(f"{k}->{v}" for k, v in self._items) + "]"

    def sort_key(self) -> tuple:
        """Biggest first, then lexicographic on (variable, id) pairs."""
        return (-len(self._items), self._items)

    def to_json(self) -> dict[str, ObjectId]:
        return dict(self._items)


EMPTY = Valuation()


def submap(a: Valuation, b: Valuation) -> bool:
    if len(a) > len(b):
        return False
    return all(b.get(k) == v and k in b for k, v in a.items_tuple)


def consistent(a: Valuation, b: Valuation) -> bool:
    if len(a) > len(b):
        a, b = b, a
    for k, v in a.items_tuple:
        if k in b and b[k] != v:
            return False
    return True


def join(a: Valuation, b: Valuation) -> Valuation:
    if not consistent(a, b):
        raise InconsistentValuations(f"{a!r} and {b!r} disagree on a shared variable")
    merged = dict(a.items_tuple)
    merged.update(b.items_tuple)
    return Valuation(merged)


# --------------------------------------------------------------------------
# events and traces


@dataclass(frozen=True)
class EventSignature:
    name: str
    params: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if len(set(self.params)) != len(self.params):
            raise SpecError(f"duplicate parameter in signature {self}")

    def __str__(self) -> str:
        return f"{self.name}({','.join(self.params)})"


@dataclass(frozen=True)
class ParametricEvent:
    name: str
    valuation: Valuation = EMPTY

    def __str__(self) -> str:
        return f"{self.name}{self.valuation!r}"


@dataclass(frozen=True)
class Garbage:
    """The object ``obj`` can no longer be observed."""

    obj: ObjectId


@dataclass(frozen=True)
class Allocation:
    obj: ObjectId
    site: str


TraceItem = ParametricEvent | Garbage | Allocation
ParametricTrace = tuple  # tuple[TraceItem, ...]


def event(name: str, **bindings: ObjectId) -> ParametricEvent:
    return ParametricEvent(name, Valuation(bindings))


def strip_garbage(trace: Iterable[TraceItem]) -> tuple[ParametricEvent, ...]:
    return tuple(item for item in trace if isinstance(item, ParametricEvent))


# --------------------------------------------------------------------------
# specifications


@dataclass(frozen=True, eq=False)
class ParametricSpec:
    alphabet: Mapping[str, EventSignature]
    states: tuple[StateId, ...]
    initial: StateId
    accepting: frozenset[StateId]
    transitions: Mapping[tuple[StateId, str], StateId]
    policy: Mapping[StateId, Policy]
    name: str = ""
    garbage_events: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.validate()

    @property
    def quantified_vars(self) -> frozenset[str]:
        return frozenset(p for sig in self.alphabet.values() for p in sig.params)

    @property
    def is_garbage_spec(self) -> bool:
        return bool(self.garbage_events)

    def all_states(self) -> tuple[StateId, ...]:
        """Declared states plus the implicit fail sink (when not declared)."""
        if FAIL_SINK in self.states:
            return self.states
        return self.states + (FAIL_SINK,)

    def is_accepting(self, state: StateId) -> bool:
        return state in self.accepting

    def policy_of(self, state: StateId) -> Policy:
        if state == ACCEPT_SINK:
            return Policy.SKIP
        return self.policy.get(state, Policy.FAIL)

    def validate(self) -> None:
        known = set(self.states) | {FAIL_SINK}
        if len(set(self.states)) != len(self.states):
            raise SpecError("duplicate state")
        if self.initial not in known:
            raise SpecError(f"initial state {self.initial!r} is not declared")
        for s in self.accepting:
            if s not in self.states:
                raise SpecError(f"accepting state {s!r} is not declared")
        if FAIL_SINK in self.accepting:
            raise SpecError("the fail sink cannot be accepting")
        for (src, name), dst in self.transitions.items():
            if name not in self.alphabet:
                raise SpecError(f"transition on unknown event {name!r}")
            if src not in known or dst not in known:
                raise SpecError(f"transition {src} {name} {dst} references an unknown state")
            if src in (FAIL_SINK, ACCEPT_SINK):
                raise SpecError(f"sink state {src!r} cannot have outgoing transitions")
        for var, name in self.garbage_events.items():
            sig = self.alphabet.get(name)
            if sig is None or sig.params != (var,):
                raise SpecError(f"garbage event for {var!r} missing from alphabet")

    def check_event(self, ev: ParametricEvent) -> None:
        sig = self.alphabet.get(ev.name)
        if sig is None:
            raise MalformedEvent(f"event {ev.name!r} is not in the alphabet")
        if set(sig.params) != set(ev.valuation):
            raise MalformedEvent(f"event {ev} does not match signature {sig}")


def step(spec: ParametricSpec, state: StateId, name: str) -> StateId:
    """One move of the propositional abstraction, totalised by the state policy."""
    if name not in spec.alphabet:
        raise MalformedEvent(f"event {name!r} is not in the alphabet")
    if state == FAIL_SINK:
        return FAIL_SINK
    target = spec.transitions.get((state, name))
    if target is not None:
        return target
    if spec.policy_of(state) is Policy.SKIP:
        return state
    return FAIL_SINK


def run(spec: ParametricSpec, names: Iterable[str], state: StateId | None = None) -> StateId:
    s = spec.initial if state is None else state
    for name in names:
        s = step(spec, s, name)
    return s


def totalize(spec: ParametricSpec) -> ParametricSpec:
    """Make every undefined move explicit; the result needs no policy."""
    trans = dict(spec.transitions)
    states = spec.all_states()
    for s in states:
        for name in spec.alphabet:
            trans[(s, name)] = step(spec, s, name)
    return ParametricSpec(
        alphabet=dict(spec.alphabet),
        states=tuple(x for x in states if x != FAIL_SINK) + (FAIL_SINK,),
        initial=spec.initial,
        accepting=spec.accepting,
        transitions={k: v for k, v in trans.items() if k[0] != FAIL_SINK},
        policy={s: Policy.FAIL for s in states},
        name=spec.name,
        garbage_events=dict(spec.garbage_events),
    )


# --------------------------------------------------------------------------
# text format

_SIG_RE = re.compile(r"([A-Za-z_][\w.]*)\(([^()]*)\)")
_NAME_RE = re.compile(r"[A-Za-z_][\w.]*$")


def _parse_signatures(rest: str, lineno: int, col0: int) -> list[EventSignature]:
    sigs = []
    pos = 0
    while pos < len(rest):
        if rest[pos].isspace():
            pos += 1
            continue
        m = _SIG_RE.match(rest, pos)
        if not m:
            raise SpecError("expected an event signature like e(x,y)", lineno, col0 + pos + 1)
        params = tuple(p.strip() for p in m.group(2).split(",") if p.strip())
        for p in params:
            if not _NAME_RE.match(p):
                raise SpecError(f"bad variable name {p!r}", lineno, col0 + m.start(2) + 1)
        try:
            sigs.append(EventSignature(m.group(1), params))
        except SpecError as exc:
            raise SpecError(str(exc), lineno, col0 + pos + 1) from None
        pos = m.end()
    return sigs


def parse_spec(text: str) -> ParametricSpec:
    alphabet: dict[str, EventSignature] = {}
    states: list[StateId] = []
    initial: StateId | None = None
    accepting: set[StateId] = set()
    policy_lines: list[tuple[str, Policy, int]] = []
    trans: dict[tuple[StateId, str], StateId] = {}
    trans_lines: dict[tuple[StateId, str], int] = {}
    garbage_vars: list[str] = []
    name = ""

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        line = line.strip()
        keyword, _, rest = line.partition(" ")
        rest_col = indent + len(keyword) + 1
        args = rest.split()
        if keyword == "name":
            name = rest.strip()
        elif keyword == "alphabet":
            for sig in _parse_signatures(rest, lineno, rest_col):
                if sig.name in alphabet:
                    raise SpecError(f"duplicate event name {sig.name!r}", lineno)
                alphabet[sig.name] = sig
        elif keyword == "states":
            for s in args:
                if s in states:
                    raise SpecError(f"duplicate state {s!r}", lineno)
                states.append(s)
        elif keyword == "initial":
            if len(args) != 1:
                raise SpecError("initial takes exactly one state", lineno)
            initial = args[0]
        elif keyword == "accepting":
            accepting.update(args)
        elif keyword == "policy":
            if len(args) != 2 or args[1] not in ("skip", "fail"):
                raise SpecError("expected: policy <state|*> skip|fail", lineno)
            policy_lines.append((args[0], Policy(args[1]), lineno))
        elif keyword == "trans":
            if len(args) != 3:
                raise SpecError("expected: trans <from> <event> <to>", lineno)
            key = (args[0], args[1])
            if key in trans and trans[key] != args[2]:
                raise SpecError(f"nondeterministic transition {args[0]} {args[1]}", lineno)
            trans[key] = args[2]
            trans_lines[key] = lineno
        elif keyword == "garbage":
            garbage_vars.extend(args)
        else:
            raise SpecError(f"unknown keyword {keyword!r}", lineno, indent + 1)

    if initial is None:
        raise SpecError("missing 'initial' line")
    known = set(states) | {FAIL_SINK}
    if initial not in known:
        raise SpecError(f"initial state {initial!r} is not declared")
    for s in accepting:
        if s not in states:
            raise SpecError(f"accepting state {s!r} is not declared")

    garbage_events: dict[str, str] = {}
    for var in garbage_vars:
        gname = garbage_event_name(var)
        if gname in alphabet and alphabet[gname].params != (var,):
            raise SpecError(f"event name {gname!r} is reserved for garbage events")
        alphabet[gname] = EventSignature(gname, (var,))
        garbage_events[var] = gname

    for (src, ev), dst in trans.items():
        lineno = trans_lines[(src, ev)]
        if ev not in alphabet:
            raise SpecError(f"transition on unknown event {ev!r}", lineno)
        if src not in known:
            raise SpecError(f"transition from unknown state {src!r}", lineno)
        if dst not in known:
            raise SpecError(f"transition to unknown state {dst!r}", lineno)

    policy: dict[StateId, Policy] = {s: Policy.FAIL for s in states}
    if ACCEPT_SINK in policy:
        policy[ACCEPT_SINK] = Policy.SKIP
    for target, pol, lineno in policy_lines:
        if target == "*":
            for s in states:
                if s not in (ACCEPT_SINK, FAIL_SINK):
                    policy[s] = pol
        elif target not in states:
            raise SpecError(f"policy for unknown state {target!r}", lineno)
        else:
            policy[target] = pol

    spec = ParametricSpec(
        alphabet=alphabet,
        states=tuple(states),
        initial=initial,
        accepting=frozenset(accepting),
        transitions=trans,
        policy=policy,
        name=name,
        garbage_events=garbage_events,
    )
    if not spec.is_accepting(spec.initial):
        log.warning(
            "initial state %s of %s is not accepting; incremental and reference "
            "verdicts may differ on valuations the trace does not induce",
            spec.initial,
            spec.name or "specification",
        )
    return spec


def format_spec(spec: ParametricSpec) -> str:
    """Render a specification in the text format accepted by :func:`parse_spec`."""
    lines = []
    if spec.name:
        lines.append(f"name {spec.name}")
    plain = [str(sig) for n, sig in spec.alphabet.items() if n not in spec.garbage_events.values()]
    if plain:
        lines.append("alphabet " + " ".join(plain))
    for var in spec.garbage_events:
        lines.append(f"garbage {var}")
    lines.append("states " + " ".join(spec.states))
    lines.append(f"initial {spec.initial}")
    acc = [s for s in spec.states if s in spec.accepting]
    if acc:
        lines.append("accepting " + " ".join(acc))
    for s in spec.states:
        if s in (ACCEPT_SINK, FAIL_SINK):
            continue
        if spec.policy_of(s) is Policy.SKIP:
            lines.append(f"policy {s} skip")
    order = {s: i for i, s in enumerate(spec.all_states())}
    names = list(spec.alphabet)
    for (src, ev), dst in sorted(
        spec.transitions.items(), key=lambda kv: (order[kv[0][0]], names.index(kv[0][1]))
    ):
        lines.append(f"trans {src} {ev} {dst}")
    return "\n".join(lines) + "\n"
