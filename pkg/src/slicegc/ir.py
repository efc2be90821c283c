"""A miniature imperative IR with explicit control flow.

Text format, one statement per line::

    # comment
    method name(p1, p2) {
    label:
      v = new C [@site]           allocation (site defaults to "<method>:<index>")
      v1 = v2                     copy (v2 may be null)
      v1 = v2.f                   field load
      v1.f = v2                   field store (v2 may be null)
      v = Cls::f                  static field load
      Cls::f = v                  static field store
      [v =] call m(a, b) [@site]  direct call; @site names the allocation site
                                  used when m is a factory
      [v =] vcall m(a, b) [@site] virtual call, dispatched on the class of a
                                  to the method named "<Class>.m"
      return [v | null]
      branch L1 L2 ...            nondeterministic fork
      if v L1 L2                  L1 when v is not null, else L2
      goto L
      emit e(a, b)                monitored event
      free site v                 garbage point (inserted by instrumentation)
    }

Statements are CFG nodes; ``goto`` only shapes edges.  Falling off the end of
a method returns.  Edges are numbered from 1 in statement order, then in
successor order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterator, Union

NULL = None
SHADOW_PREFIX = "__free_"


class IRError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class New:
    dst: str
    cls: str
    site: str


@dataclass(frozen=True)
class Copy:
    dst: str
    src: str | None


@dataclass(frozen=True)
class Load:
    dst: str
    base: str
    field: str


@dataclass(frozen=True)
class Store:
    base: str
    field: str
    src: str | None


@dataclass(frozen=True)
class StaticLoad:
    dst: str
    cls: str
    field: str


@dataclass(frozen=True)
class StaticStore:
    cls: str
    field: str
    src: str | None


@dataclass(frozen=True)
class Call:
    dst: str | None
    method: str
    args: tuple[str | None, ...]
    site: str
    virtual: bool = False


@dataclass(frozen=True)
class Return:
    var: str | None = None


@dataclass(frozen=True)
class Branch:
    pass


@dataclass(frozen=True)
class If:
    var: str


@dataclass(frozen=True)
class Emit:
    name: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class Free:
    site: str
    var: str


Stmt = Union[New, Copy, Load, Store, StaticLoad, StaticStore, Call, Return, Branch, If, Emit, Free]


def is_shadow(var: str | None) -> bool:
    return var is not None and var.startswith(SHADOW_PREFIX)


def shadow_var(site: str) -> str:
    return SHADOW_PREFIX + re.sub(r"\W", "_", site)


def defs(stmt: Stmt) -> tuple[str, ...]:
    dst = getattr(stmt, "dst", None)
    return (dst,) if dst is not None else ()


def uses(stmt: Stmt) -> tuple[str, ...]:
    if isinstance(stmt, Copy):
        vs = (stmt.src,)
    elif isinstance(stmt, Load):
        vs = (stmt.base,)
    elif isinstance(stmt, Store):
        vs = (stmt.base, stmt.src)
    elif isinstance(stmt, StaticStore):
        vs = (stmt.src,)
    elif isinstance(stmt, Call):
        vs = stmt.args
    elif isinstance(stmt, Return):
        vs = (stmt.var,)
    elif isinstance(stmt, If):
        vs = (stmt.var,)
    elif isinstance(stmt, Emit):
        vs = stmt.args
    elif isinstance(stmt, Free):
        vs = (stmt.var,)
    else:
        vs = ()
    return tuple(v for v in vs if v is not None)


def allocated_site(stmt: Stmt) -> str | None:
    if isinstance(stmt, New):
        return stmt.site
    if isinstance(stmt, Call) and stmt.dst is not None:
        return stmt.site
    return None


@dataclass(frozen=True)
class Edge:
    id: int
    src: int
    dst: int


@dataclass
class Method:
    name: str
    params: tuple[str, ...]
    stmts: list[Stmt]
    succ: list[tuple[int, ...]]
    labels: dict[int, str] = field(default_factory=dict)
    lines: list[int] = field(default_factory=list)

    entry: int = 0

    @property
    def edges(self) -> list[Edge]:
        out = []
        for i, targets in enumerate(self.succ):
            for j in targets:
                out.append(Edge(len(out) + 1, i, j))
        return out

    def preds(self) -> list[list[int]]:
        p: list[list[int]] = [[] for _ in self.stmts]
        for i, targets in enumerate(self.succ):
            for j in targets:
                p[j].append(i)
        return p

    def variables(self) -> set[str]:
        vs = set(self.params)
        for s in self.stmts:
            vs.update(defs(s))
            vs.update(uses(s))
        return vs

    def sites(self) -> dict[str, int]:
        """Allocation site -> defining statement (calls count; factories decide later)."""
        return {
            site: i for i, s in enumerate(self.stmts) if (site := allocated_site(s)) is not None
        }

    def owner_class(self) -> str | None:
        return self.name.split(".", 1)[0] if "." in self.name else None


@dataclass
class Program:
    methods: dict[str, Method]

    def __iter__(self) -> Iterator[Method]:
        return iter(self.methods.values())

    def __getitem__(self, name: str) -> Method:
        return self.methods[name]

    def targets(self, call: Call) -> list[Method]:
        """Methods a call may reach; empty for unknown (external) callees."""
        if not call.virtual:
            m = self.methods.get(call.method)
            return [m] if m is not None else []
        return [
            m
            for name, m in self.methods.items()
            if name.endswith("." + call.method) and len(m.params) == len(call.args)
        ]

    def validate(self) -> None:
        for m in self:
            for i, s in enumerate(m.stmts):
                if isinstance(s, Call) and not s.virtual and s.method in self.methods:
                    callee = self.methods[s.method]
                    if len(callee.params) != len(s.args):
                        raise IRError(
                            f"{m.name}: call to {s.method} with {len(s.args)} arguments",
                            m.lines[i] if m.lines else None,
                        )


# ---------------------------------------------------------------------------
# parsing

_ID = r"[A-Za-z_][\w]*"
_QID = r"[A-Za-z_][\w.]*"
_RE = {
    "method": re.compile(rf"method\s+({_QID})\s*\(([^)]*)\)\s*\{{$"),
    "label": re.compile(rf"({_ID}):$"),
    "new": re.compile(rf"({_ID})\s*=\s*new\s+({_QID})(?:\s+@(\S+))?$"),
    "call": re.compile(rf"(?:({_ID})\s*=\s*)?(call|vcall)\s+({_QID})\s*\(([^)]*)\)(?:\s+@(\S+))?$"),
    "sload": re.compile(rf"({_ID})\s*=\s*({_ID})::({_ID})$"),
    "sstore": re.compile(rf"({_ID})::({_ID})\s*=\s*({_ID})$"),
    "load": re.compile(rf"({_ID})\s*=\s*({_ID})\.({_ID})$"),
    "store": re.compile(rf"({_ID})\.({_ID})\s*=\s*({_ID})$"),
    "copy": re.compile(rf"({_ID})\s*=\s*({_ID})$"),
    "return": re.compile(rf"return(?:\s+({_ID}))?$"),
    "branch": re.compile(rf"branch((?:\s+{_ID})+)$"),
    "if": re.compile(rf"if\s+({_ID})\s+({_ID})\s+({_ID})$"),
    "goto": re.compile(rf"goto\s+({_ID})$"),
    "emit": re.compile(rf"emit\s+({_QID})\s*\(([^)]*)\)$"),
    "free": re.compile(rf"free\s+(\S+)\s+({_ID})$"),
}


def _null(v: str | None) -> str | None:
    return None if v in (None, "null") else v


def _arglist(text: str, lineno: int) -> tuple[str | None, ...]:
    out = []
    for a in (x.strip() for x in text.split(",")):
        if not a:
            continue
        if not re.fullmatch(_ID, a):
            raise IRError(f"bad argument {a!r}", lineno)
        out.append(_null(a))
    return tuple(out)


def _parse_stmt(text: str, method: str, index: int, lineno: int):
    """Return (kind, payload).  kind is 'stmt' or 'goto'; branch targets stay symbolic."""
    r = _RE
    if m := r["goto"].match(text):
        return "goto", m.group(1)
    if m := r["new"].match(text):
        return "stmt", (New(m.group(1), m.group(2), m.group(3) or f"{method}:{index}"), ())
    if m := r["call"].match(text):
        dst, kind, name, args, site = m.groups()
        return "stmt", (
            Call(dst, name, _arglist(args, lineno), site or f"{method}:{index}", kind == "vcall"),
            (),
        )
    if m := r["sload"].match(text):
        return "stmt", (StaticLoad(*m.groups()), ())
    if m := r["sstore"].match(text):
        cls, fld, src = m.groups()
        return "stmt", (StaticStore(cls, fld, _null(src)), ())
    if m := r["load"].match(text):
        return "stmt", (Load(*m.groups()), ())
    if m := r["store"].match(text):
        base, fld, src = m.groups()
        return "stmt", (Store(base, fld, _null(src)), ())
    if m := r["return"].match(text):
        return "stmt", (Return(_null(m.group(1))), ())
    if m := r["branch"].match(text):
        return "stmt", (Branch(), tuple(m.group(1).split()))
    if m := r["if"].match(text):
        return "stmt", (If(m.group(1)), (m.group(2), m.group(3)))
    if m := r["emit"].match(text):
        args = _arglist(m.group(2), lineno)
        if None in args:
            raise IRError("emit arguments cannot be null", lineno)
        return "stmt", (Emit(m.group(1), args), ())
    if m := r["free"].match(text):
        return "stmt", (Free(m.group(1), m.group(2)), ())
    if m := r["copy"].match(text):
        dst, src = m.groups()
        return "stmt", (Copy(dst, _null(src)), ())
    raise IRError(f"cannot parse statement {text!r}", lineno)


def _build_method(name, params, items, header_line) -> Method:
    # items: ("label", name, line) | ("stmt", (stmt, targets), line) | ("goto", label, line)
    stmts: list[Stmt] = []
    lines: list[int] = []
    sym_targets: list[tuple[str, ...]] = []
    pos_of_stmt: list[int] = []
    label_pos: dict[str, int] = {}
    for pos, (kind, payload, line) in enumerate(items):
        if kind == "label":
            if payload in label_pos:
                raise IRError(f"duplicate label {payload!r}", line)
            label_pos[payload] = pos
        elif kind == "stmt":
            stmt, targets = payload
            stmts.append(stmt)
            lines.append(line)
            sym_targets.append(targets)
            pos_of_stmt.append(pos)
    stmt_at = {p: i for i, p in enumerate(pos_of_stmt)}
    implicit_return: list[int] = []

    def resolve(pos: int, seen: frozenset = frozenset()) -> int:
        while pos < len(items):
            kind, payload, line = items[pos]
            if kind == "stmt":
                return stmt_at[pos]
            if kind == "goto":
                if payload not in label_pos:
                    raise IRError(f"unknown label {payload!r}", line)
                if payload in seen:
                    raise IRError(f"goto cycle through {payload!r}", line)
                seen = seen | {payload}
                pos = label_pos[payload]
            pos += 1
        if not implicit_return:
            stmts.append(Return(None))
            lines.append(items[-1][2] if items else header_line)
            sym_targets.append(())
            implicit_return.append(len(stmts) - 1)
        return implicit_return[0]

    def label_target(label: str, line: int) -> int:
        if label not in label_pos:
            raise IRError(f"unknown label {label!r}", line)
        return resolve(label_pos[label] + 1, frozenset({label}))

    n_real = len(stmts)
    succ: list[tuple[int, ...]] = []
    for i in range(n_real):
        stmt = stmts[i]
        if isinstance(stmt, Return):
            succ.append(())
        elif isinstance(stmt, (Branch, If)):
            succ.append(tuple(label_target(t, lines[i]) for t in sym_targets[i]))
        else:
            succ.append((resolve(pos_of_stmt[i] + 1),))
    entry = resolve(0)
    labels = {}
    for label, pos in label_pos.items():
        labels.setdefault(resolve(pos + 1), label)
    while len(succ) < len(stmts):
        succ.append(())
    if entry != 0:
        raise IRError(f"method {name} must not start with a jump", header_line)
    method = Method(name, params, stmts, succ, labels, lines)
    _check_reachable(method)
    _check_vars(method)
    return method


def _check_reachable(m: Method) -> None:
    seen = {0}
    todo = [0]
    while todo:
        i = todo.pop()
        for j in m.succ[i]:
            if j not in seen:
                seen.add(j)
                todo.append(j)
    dead = sorted(set(range(len(m.stmts))) - seen)
    if dead:
        raise IRError(f"unreachable statement in {m.name}", m.lines[dead[0]])


def _check_vars(m: Method) -> None:
    assigned = set(m.params)
    for s in m.stmts:
        assigned.update(defs(s))
    for i, s in enumerate(m.stmts):
        for v in uses(s):
            if v not in assigned:
                raise IRError(f"variable {v!r} is never assigned in {m.name}", m.lines[i])


def parse_program(text: str) -> Program:
    methods: dict[str, Method] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if current is None:
            m = _RE["method"].match(line)
            if not m:
                raise IRError(f"expected 'method name(params) {{', got {line!r}", lineno)
            params = tuple(p.strip() for p in m.group(2).split(",") if p.strip())
            if len(set(params)) != len(params):
                raise IRError("duplicate parameter", lineno)
            current = (m.group(1), params, [], lineno)
            continue
        name, params, items, header = current
        if line == "}":
            if name in methods:
                raise IRError(f"duplicate method {name!r}", header)
            methods[name] = _build_method(name, params, items, header)
            current = None
            continue
        if m := _RE["label"].match(line):
            items.append(("label", m.group(1), lineno))
            continue
        n_stmts = sum(1 for it in items if it[0] == "stmt")
        kind, payload = _parse_stmt(line, name, n_stmts, lineno)
        items.append((kind, payload, lineno))
    if current is not None:
        raise IRError(f"method {current[0]} is not closed", current[3])
    program = Program(methods)
    program.validate()
    return program


# ---------------------------------------------------------------------------
# printing


def _arg(v: str | None) -> str:
    return "null" if v is None else v


def format_stmt(s: Stmt, label_of) -> str:
    if isinstance(s, New):
        return f"{s.dst} = new {s.cls} @{s.site}"
    if isinstance(s, Copy):
        return f"{s.dst} = {_arg(s.src)}"
    if isinstance(s, Load):
        return f"{s.dst} = {s.base}.{s.field}"
    if isinstance(s, Store):
        return f"{s.base}.{s.field} = {_arg(s.src)}"
    if isinstance(s, StaticLoad):
        return f"{s.dst} = {s.cls}::{s.field}"
    if isinstance(s, StaticStore):
        return f"{s.cls}::{s.field} = {_arg(s.src)}"
    if isinstance(s, Call):
        head = f"{s.dst} = " if s.dst else ""
        kw = "vcall" if s.virtual else "call"
        return f"{head}{kw} {s.method}({', '.join(map(_arg, s.args))}) @{s.site}"
    if isinstance(s, Return):
        return "return" if s.var is None else f"return {s.var}"
    if isinstance(s, Emit):
        return f"emit {s.name}({', '.join(s.args)})"
    if isinstance(s, Free):
        return f"free {s.site} {s.var}"
    raise TypeError(s)


def format_method(m: Method) -> str:
    def label_of(i: int) -> str:
        return m.labels.get(i, f"_L{i}")

    targets = set()
    for i, s in enumerate(m.stmts):
        if isinstance(s, (Branch, If)):
            targets.update(m.succ[i])
        elif m.succ[i] and m.succ[i][0] != i + 1:
            targets.add(m.succ[i][0])
    out = [f"method {m.name}({', '.join(m.params)}) {{"]
    for i, s in enumerate(m.stmts):
        if i in m.labels or i in targets:
            out.append(f"{label_of(i)}:")
        if isinstance(s, Branch):
            out.append("  branch " + " ".join(label_of(j) for j in m.succ[i]))
        elif isinstance(s, If):
            a, b = m.succ[i]
            out.append(f"  if {s.var} {label_of(a)} {label_of(b)}")
        else:
            out.append("  " + format_stmt(s, label_of))
            if m.succ[i] and m.succ[i][0] != i + 1:
                out.append(f"  goto {label_of(m.succ[i][0])}")
    out.append("}")
    return "\n".join(out)


def format_program(p: Program) -> str:
    return "\n\n".join(format_method(m) for m in p) + "\n"


def with_stmts(m: Method, stmts: list[Stmt], succ: list[tuple[int, ...]], labels=None) -> Method:
    return replace(m, stmts=stmts, succ=succ, labels=dict(labels if labels is not None else m.labels),
                   lines=list(m.lines) + [0] * (len(stmts) - len(m.lines)))
