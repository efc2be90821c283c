"""Concrete interpreter for the IR, producing parametric traces.

Objects get integer ids from a counter that is never reset, so ids are not
reused within one execution.  ``free`` statements emit ``Garbage(id)`` the
first time they see an object and poison it: any later field access, store,
call, emit or return of a poisoned object raises ``PostFreeAccess``.

The optional dynamic oracle recomputes, after every step, which objects are
reachable from the live variables of every frame plus the static fields, and
records the step at which each object first becomes unreachable.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterator, Literal

from .analysis import live_in
from .ir import (
    Branch,
    Call,
    Copy,
    Emit,
    Free,
    If,
    Load,
    Method,
    New,
    Program,
    Return,
    StaticLoad,
    StaticStore,
    Store,
    is_shadow,
)
from .spec import Allocation, EventSignature, Garbage, ParametricEvent, TraceItem, Valuation


class ExecutionError(RuntimeError):
    pass


class NullDereference(ExecutionError):
    pass


class LoopBoundExceeded(ExecutionError):
    pass


class PostFreeAccess(ExecutionError):
    """A freed object was used, or was still reachable when freed."""


@dataclass
class ExecConfig:
    entry: str = "main"
    args: list[str] = field(default_factory=list)  # "new C" | "null" | "maybe C"
    branch: Literal["random", "script", "enumerate"] = "random"
    seed: int = 0
    loop_bound: int = 10
    script: list[int] = field(default_factory=list)
    # emit name -> event name | None (drop) | {"event": name, "args": [positions]};
    # when non-empty it must cover every emit in the program
    events: dict[str, str | dict | None] = field(default_factory=dict)
    oracle: bool = False
    log_allocations: bool = False
    max_steps: int = 200_000
    max_depth: int = 1000

    @classmethod
    def from_json(cls, data: dict) -> "ExecConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        cfg = cls(**data)
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.loop_bound < 1:
            raise ValueError("loop_bound must be at least 1")
        for name, target in self.events.items():
            if isinstance(target, dict) and not isinstance(target.get("event"), str):
                raise ValueError(f"event mapping for {name!r} needs an 'event' name")

    def map_event(self, name: str, ids: list[int]) -> tuple[str, list[int]] | None:
        if not self.events:
            return name, ids
        if name not in self.events:
            raise ExecutionError(f"no event mapping for emit {name!r}")
        target = self.events[name]
        if target is None:
            return None
        if isinstance(target, str):
            return target, ids
        positions = target.get("args", list(range(len(ids))))
        try:
            return target["event"], [ids[k] for k in positions]
        except IndexError:
            raise ExecutionError(f"event mapping for {name!r} uses a missing argument") from None


@dataclass
class HeapObject:
    id: int
    cls: str
    site: str
    fields: dict[str, int | None] = field(default_factory=dict)
    freed: bool = False


@dataclass
class Frame:
    method: Method
    locals: dict[str, int | None]
    pc: int = 0
    ret_dst: str | None = None
    visits: dict[int, int] = field(default_factory=dict)


@dataclass
class ExecutionResult:
    trace: list[TraceItem]
    steps: int
    choices: list[tuple[int, int]]  # (chosen index, number of options)
    alloc_step: dict[int, int]
    unreachable_step: dict[int, int]
    free_step: dict[int, int]
    sites: dict[int, str]

    def free_delays(self) -> dict[int, int]:
        """Steps between dynamic unreachability and the free, per freed object."""
        return {
            o: s - self.unreachable_step[o]
            for o, s in self.free_step.items()
            if o in self.unreachable_step
        }

    def to_json(self) -> dict:
        return {
            "steps": self.steps,
            "events": sum(isinstance(x, ParametricEvent) for x in self.trace),
            "allocations": len(self.alloc_step),
            "garbage": len(self.free_step),
            "dynamically_unreachable": len(self.unreachable_step),
        }


class Interpreter:
    def __init__(
        self,
        program: Program,
        config: ExecConfig,
        alphabet: dict[str, EventSignature] | None = None,
    ):
        self.program = program
        self.config = config
        self.alphabet = alphabet or {}
        self.rng = random.Random(config.seed)
        self.script = list(config.script)
        self.heap: dict[int, HeapObject] = {}
        self.statics: dict[tuple[str, str], int | None] = {}
        self.stack: list[Frame] = []
        self.trace: list[TraceItem] = []
        self.choices: list[tuple[int, int]] = []
        self.next_id = 1
        self.steps = 0
        self.alloc_step: dict[int, int] = {}
        self.unreachable_step: dict[int, int] = {}
        self.free_step: dict[int, int] = {}
        self._live: dict[str, list[set[str]]] = {}

    # -- helpers

    def _where(self) -> str:
        f = self.stack[-1]
        line = f.method.lines[f.pc] if f.pc < len(f.method.lines) else "?"
        return f"{f.method.name}[{f.pc}] (line {line}) at step {self.steps}"

    def _alloc(self, cls: str, site: str) -> int:
        oid = self.next_id
        self.next_id += 1
        self.heap[oid] = HeapObject(oid, cls, site)
        self.alloc_step[oid] = self.steps
        if self.config.log_allocations:
            self.trace.append(Allocation(oid, site))
        return oid

    def _obj(self, ref: int | None, what: str) -> HeapObject:
        if ref is None:
            raise NullDereference(f"null {what} in {self._where()}")
        obj = self.heap[ref]
        if obj.freed:
            raise PostFreeAccess(f"{what} of freed object {ref} ({obj.site}) in {self._where()}")
        return obj

    def _check_alive(self, ref: int | None, what: str) -> None:
        if ref is not None and self.heap[ref].freed:
            raise PostFreeAccess(
                f"{what} of freed object {ref} ({self.heap[ref].site}) in {self._where()}"
            )

    def _choose(self, options: list[int]) -> int:
        n = len(options)
        if self.script:
            k = self.script.pop(0)
            if not 0 <= k < n:
                raise ExecutionError(f"scripted choice {k} out of range in {self._where()}")
        elif self.config.branch == "script":
            k = 0
        else:
            k = self.rng.randrange(n)
        self.choices.append((k, n))
        return options[k]

    def _branch(self, frame: Frame, targets: tuple[int, ...]) -> int:
        bound = self.config.loop_bound
        allowed = [t for t in targets if frame.visits.get(t, 0) < bound]
        if not allowed:
            raise LoopBoundExceeded(f"every branch target hit the bound {bound} in {self._where()}")
        if len(allowed) < len(targets):
            # bound reached on some target: leave the loop deterministically
            return allowed[0] if len(allowed) == 1 else self._choose(allowed)
        return self._choose(allowed)

    def _event(self, name: str, ids: list[int]) -> ParametricEvent:
        sig = self.alphabet.get(name)
        if sig is not None:
            if len(sig.params) != len(ids):
                raise ExecutionError(f"event {name} expects {len(sig.params)} arguments")
            return ParametricEvent(name, Valuation(zip(sig.params, ids)))
        return ParametricEvent(name, Valuation((f"_{k}", o) for k, o in enumerate(ids)))

    # -- oracle

    def _live_in(self, m: Method) -> list[set[str]]:
        if m.name not in self._live:
            self._live[m.name] = live_in(m)
        return self._live[m.name]

    def reachable(self) -> set[int]:
        roots: list[int | None] = list(self.statics.values())
        for depth, f in enumerate(self.stack):
            live = self._live_in(f.method)
            if depth == len(self.stack) - 1:
                names = live[f.pc] if f.pc < len(live) else set()
            else:
                # suspended at a call: what is live after it, minus its result
                call = f.method.stmts[f.pc]
                names = set()
                for j in f.method.succ[f.pc]:
                    names |= live[j]
                names.discard(getattr(call, "dst", None))
            roots.extend(f.locals.get(v) for v in names if not is_shadow(v))
        seen: set[int] = set()
        todo = [r for r in roots if r is not None]
        while todo:
            o = todo.pop()
            if o in seen:
                continue
            seen.add(o)
            todo.extend(v for v in self.heap[o].fields.values() if v is not None and v not in seen)
        return seen

    def _observe(self) -> None:
        reach = self.reachable()
        for oid in self.heap:
            if oid not in reach and oid not in self.unreachable_step:
                self.unreachable_step[oid] = self.steps
            elif oid in reach and oid in self.free_step:
                raise PostFreeAccess(f"freed object {oid} reachable again at step {self.steps}")

    # -- execution

    def _entry_args(self, m: Method) -> list[int | None]:
        recipes = list(self.config.args)
        if len(recipes) < len(m.params):
            recipes += ["null"] * (len(m.params) - len(recipes))
        if len(recipes) > len(m.params):
            raise ExecutionError(f"{m.name} takes {len(m.params)} arguments")
        out = []
        for k, r in enumerate(recipes):
            parts = r.split()
            if parts == ["null"]:
                out.append(None)
            elif len(parts) == 2 and parts[0] == "new":
                out.append(self._alloc(parts[1], f"<arg{k}>"))
            elif len(parts) == 2 and parts[0] == "maybe":
                out.append(self._alloc(parts[1], f"<arg{k}>") if self.rng.random() < 0.5 else None)
            else:
                raise ExecutionError(f"bad argument recipe {r!r}")
        return out

    def run(self) -> ExecutionResult:
        cfg = self.config
        cfg.check()
        if cfg.events:
            missing = {
                s.name for m in self.program for s in m.stmts if isinstance(s, Emit)
            } - set(cfg.events)
            if missing:
                raise ExecutionError(f"no event mapping for emit(s) {sorted(missing)}")
        if cfg.entry not in self.program.methods:
            raise ExecutionError(f"no entry method {cfg.entry!r}")
        m = self.program[cfg.entry]
        self.stack.append(Frame(m, dict(zip(m.params, self._entry_args(m)))))
        if cfg.oracle:
            self._observe()
        while self.stack:
            self.steps += 1
            if self.steps > cfg.max_steps:
                raise LoopBoundExceeded(f"step limit {cfg.max_steps} reached")
            self._step()
            if cfg.oracle:
                self._observe()
        return ExecutionResult(
            trace=self.trace,
            steps=self.steps,
            choices=self.choices,
            alloc_step=self.alloc_step,
            unreachable_step=self.unreachable_step,
            free_step=self.free_step,
            sites={o: h.site for o, h in self.heap.items()},
        )

    def _goto(self, f: Frame, target: int) -> None:
        f.pc = target
        f.visits[target] = f.visits.get(target, 0) + 1

    def _next(self, f: Frame) -> None:
        self._goto(f, f.method.succ[f.pc][0])

    def _step(self) -> None:
        f = self.stack[-1]
        s = f.method.stmts[f.pc]
        loc = f.locals
        if isinstance(s, New):
            loc[s.dst] = self._alloc(s.cls, s.site)
        elif isinstance(s, Copy):
            loc[s.dst] = loc.get(s.src) if s.src is not None else None
        elif isinstance(s, Load):
            loc[s.dst] = self._obj(loc.get(s.base), "field load").fields.get(s.field)
        elif isinstance(s, Store):
            base = self._obj(loc.get(s.base), "field store")
            val = loc.get(s.src) if s.src is not None else None
            self._check_alive(val, "store")
            base.fields[s.field] = val
        elif isinstance(s, StaticLoad):
            loc[s.dst] = self.statics.get((s.cls, s.field))
        elif isinstance(s, StaticStore):
            val = loc.get(s.src) if s.src is not None else None
            self._check_alive(val, "static store")
            self.statics[(s.cls, s.field)] = val
        elif isinstance(s, Emit):
            ids = [self._obj(loc.get(a), f"argument of {s.name}").id for a in s.args]
            mapped = self.config.map_event(s.name, ids)
            if mapped is not None:
                self.trace.append(self._event(*mapped))
        elif isinstance(s, Free):
            ref = loc.get(s.var)
            if ref is not None and not self.heap[ref].freed:
                if self.config.oracle and ref in self.reachable():
                    raise PostFreeAccess(
                        f"object {ref} ({s.site}) freed while reachable in {self._where()}"
                    )
                self.heap[ref].freed = True
                self.free_step[ref] = self.steps
                self.trace.append(Garbage(ref))
            loc[s.var] = None
        elif isinstance(s, Branch):
            self._goto(f, self._branch(f, f.method.succ[f.pc]))
            return
        elif isinstance(s, If):
            a, b = f.method.succ[f.pc]
            self._goto(f, a if loc.get(s.var) is not None else b)
            return
        elif isinstance(s, Call):
            self._call(f, s)
            return
        elif isinstance(s, Return):
            val = loc.get(s.var) if s.var is not None else None
            self._check_alive(val, "return")
            self.stack.pop()
            if self.stack:
                caller = self.stack[-1]
                if f.ret_dst is not None:
                    caller.locals[f.ret_dst] = val
                self._next(caller)
            return
        else:
            raise ExecutionError(f"unknown statement {s!r}")
        self._next(f)

    def _call(self, f: Frame, s: Call) -> None:
        args = [f.locals.get(a) if a is not None else None for a in s.args]
        for a in args:
            self._check_alive(a, f"argument of {s.method}")
        if s.virtual:
            recv = self._obj(args[0] if args else None, f"receiver of {s.method}")
            callee = self.program.methods.get(f"{recv.cls}.{s.method}")
        else:
            callee = self.program.methods.get(s.method)
        if callee is None:
            # external method: no effect, returns null
            if s.dst is not None:
                f.locals[s.dst] = None
            self._next(f)
            return
        if len(self.stack) >= self.config.max_depth:
            raise ExecutionError(f"call depth {self.config.max_depth} exceeded in {self._where()}")
        self.stack.append(Frame(callee, dict(zip(callee.params, args)), ret_dst=s.dst))


def execute(
    program: Program,
    config: ExecConfig,
    alphabet: dict[str, EventSignature] | None = None,
) -> ExecutionResult:
    """Run ``program`` once.  With ``alphabet`` events bind the spec's
    variables; other events bind positional variables ``_0``, ``_1``..."""
    if config.branch == "enumerate":
        raise ValueError("use enumerate_executions for exhaustive runs")
    return Interpreter(program, config, alphabet).run()


def enumerate_executions(
    program: Program,
    config: ExecConfig,
    alphabet: dict[str, EventSignature] | None = None,
    limit: int = 10_000,
) -> Iterator[ExecutionResult]:
    """Every execution under the loop bound, by depth-first choice replay."""
    from dataclasses import replace

    prefix: list[int] = []
    for _ in range(limit):
        cfg = replace(config, branch="script", script=list(prefix))
        result = Interpreter(program, cfg, alphabet).run()
        yield result
        choices = list(result.choices)
        while choices and choices[-1][0] + 1 >= choices[-1][1]:
            choices.pop()
        if not choices:
            return
        prefix = [k for k, _ in choices[:-1]] + [choices[-1][0] + 1]


def dynamic_unreachability_oracle(
    program: Program, config: ExecConfig
) -> dict[int, set[int]]:
    """Step -> objects that became unreachable at that step."""
    from dataclasses import replace

    result = execute(program, replace(config, oracle=True))
    out: dict[int, set[int]] = {}
    for obj, step_no in result.unreachable_step.items():
        out.setdefault(step_no, set()).add(obj)
    return out
