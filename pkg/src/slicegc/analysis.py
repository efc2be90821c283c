"""Intraprocedural free-me analysis over the IR.

Pipeline per method: flow-insensitive points-to with method summaries and
factory detection, escape classification, statement-level backward liveness,
per-edge reachability of allocation sites, and selection of free points.

Points-to nodes are allocation sites, the global node ``<G>`` and one
placeholder ``<P:q>`` per parameter standing for whatever the caller passed.
The pseudo variable ``<g>`` collects everything globally reachable.

Shadow variables (``__free_*``) and ``free`` statements added by
instrumentation are invisible to every analysis here, so analysing an
instrumented program gives the same answers as the original.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Literal

import networkx as nx

from .ir import (
    Call,
    Copy,
    Edge,
    Free,
    Load,
    Method,
    New,
    Program,
    Return,
    StaticLoad,
    StaticStore,
    Stmt,
    Store,
    defs,
    is_shadow,
    shadow_var,
    uses,
    with_stmts,
)

GLOBAL = "GLOBAL"
RETURN = "RETURN"
G_NODE = "<G>"
G_VAR = "<g>"


def param_node(name: str) -> str:
    return f"<P:{name}>"


class UnknownMethod(LookupError):
    pass


@dataclass(frozen=True)
class MethodSummary:
    """``(p, q)``: after the call, the object passed as parameter ``q`` is
    reachable from ``p`` (a parameter index, ``GLOBAL`` or ``RETURN``)."""

    pairs: frozenset[tuple[int | str, int]] = frozenset()
    factory: bool = False

    @classmethod
    def worst_case(cls, arity: int) -> "MethodSummary":
        return cls(frozenset((GLOBAL, q) for q in range(arity)), False)

    def to_json(self, params: tuple[str, ...] | None = None) -> dict:
        def name(x):
            if isinstance(x, str) or params is None:
                return x
            return params[x]

        return {
            "pairs": sorted([[name(p), name(q)] for p, q in self.pairs], key=str),
            "factory": self.factory,
        }

    @classmethod
    def from_json(cls, data: dict, params: tuple[str, ...] | None = None) -> "MethodSummary":
        def index(x):
            if x in (GLOBAL, RETURN):
                return x
            if isinstance(x, int):
                return x
            if params is not None and x in params:
                return params.index(x)
            return int(x)

        return cls(
            frozenset((index(p), index(q)) for p, q in data.get("pairs", [])),
            bool(data.get("factory", False)),
        )


@dataclass
class AnalysisConfig:
    on_unknown: Literal["worst", "error"] = "worst"
    annotations: dict[str, MethodSummary] = field(default_factory=dict)


@dataclass
class PointsToState:
    pts: dict[str, set[str]]
    heap: dict[str, set[str]]
    sites: set[str]
    factory_calls: set[int]

    def closure(self, nodes: Iterable[str]) -> set[str]:
        seen = set(nodes)
        todo = list(seen)
        while todo:
            n = todo.pop()
            for m in self.heap.get(n, ()):
                if m not in seen:
                    seen.add(m)
                    todo.append(m)
        return seen

    def points_to(self, var: str | None) -> set[str]:
        if var is None:
            return set()
        return self.pts.get(var, set())

    def tc(self, var: str | None) -> set[str]:
        return self.closure(self.points_to(var))

    def globally_reachable(self) -> set[str]:
        return self.tc(G_VAR)

    def externally_reachable(self, params: Iterable[str]) -> set[str]:
        """Reachable from globals or from anything the caller handed in."""
        return self.closure(self.points_to(G_VAR) | {param_node(p) for p in params})

    def to_json(self) -> dict:
        return {
            "points_to": {v: sorted(s) for v, s in sorted(self.pts.items())},
            "heap": {n: sorted(s) for n, s in sorted(self.heap.items()) if s},
            "sites": sorted(self.sites),
        }


# ---------------------------------------------------------------------------
# points-to


def call_summary(
    call: Call,
    program: Program | None,
    summaries: dict[str, MethodSummary],
    config: AnalysisConfig,
) -> MethodSummary:
    if program is not None:
        names = [m.name for m in program.targets(call)]
    else:
        names = [call.method] if call.method in summaries else []
    found = [summaries[n] for n in names if n in summaries]
    if not found:
        if call.method in config.annotations:
            return config.annotations[call.method]
        if config.on_unknown == "error":
            raise UnknownMethod(f"call to unknown method {call.method!r}")
        return MethodSummary.worst_case(len(call.args))
    pairs = frozenset().union(*(s.pairs for s in found))
    return MethodSummary(pairs, all(s.factory for s in found))


def pointer_analysis(
    m: Method,
    summaries: dict[str, MethodSummary],
    program: Program | None = None,
    config: AnalysisConfig | None = None,
) -> PointsToState:
    config = config or AnalysisConfig()
    pts: dict[str, set[str]] = {v: set() for v in m.variables() if not is_shadow(v)}
    for p in m.params:
        pts[p] = {param_node(p)}
    pts[G_VAR] = {G_NODE}
    heap: dict[str, set[str]] = {}
    sites: set[str] = set()
    factory_calls: set[int] = set()
    state = PointsToState(pts, heap, sites, factory_calls)

    resolved = {
        i: call_summary(s, program, summaries, config)
        for i, s in enumerate(m.stmts)
        if isinstance(s, Call)
    }

    def add(target: set[str], nodes: set[str]) -> bool:
        before = len(target)
        target |= nodes
        return len(target) != before

    changed = True
    while changed:
        changed = False
        for i, s in enumerate(m.stmts):
            if isinstance(s, Free) or any(is_shadow(v) for v in defs(s)):
                continue
            if isinstance(s, New):
                sites.add(s.site)
                changed |= add(pts[s.dst], {s.site})
            elif isinstance(s, Copy):
                changed |= add(pts[s.dst], state.points_to(s.src))
            elif isinstance(s, Load):
                changed |= add(pts[s.dst], state.tc(s.base))
            elif isinstance(s, Store):
                src = state.points_to(s.src)
                for n in list(pts[s.base]):
                    changed |= add(heap.setdefault(n, set()), src)
            elif isinstance(s, StaticLoad):
                changed |= add(pts[s.dst], pts[G_VAR])
            elif isinstance(s, StaticStore):
                changed |= add(pts[G_VAR], state.points_to(s.src))
            elif isinstance(s, Call):
                summ = resolved[i]
                for p, q in summ.pairs:
                    if q >= len(s.args):
                        continue
                    src = state.points_to(s.args[q])
                    if p == GLOBAL:
                        changed |= add(pts[G_VAR], src)
                    elif p == RETURN:
                        if s.dst is None:
                            continue
                        if summ.factory:
                            # reachable from the fresh object, not aliased to it
                            changed |= add(heap.setdefault(s.site, set()), src)
                        else:
                            changed |= add(pts[s.dst], src)
                    elif p < len(s.args) and s.args[p] is not None:
                        for n in list(pts[s.args[p]]):
                            changed |= add(heap.setdefault(n, set()), src)
                if s.dst is not None:
                    if summ.factory:
                        sites.add(s.site)
                        factory_calls.add(i)
                        changed |= add(pts[s.dst], {s.site})
                    else:
                        changed |= add(pts[s.dst], pts[G_VAR])
    return state


def _returned_vars(m: Method) -> list[str]:
    return [s.var for s in m.stmts if isinstance(s, Return) and s.var is not None]


def factory_from(m: Method, state: PointsToState) -> bool:
    returned = _returned_vars(m)
    if not returned:
        return False
    external = state.externally_reachable(m.params)
    for v in returned:
        direct = state.points_to(v)
        if not direct <= state.sites or direct & external:
            return False
    return True


def detect_factory(
    m: Method,
    summaries: dict[str, MethodSummary],
    program: Program | None = None,
    config: AnalysisConfig | None = None,
) -> bool:
    return factory_from(m, pointer_analysis(m, summaries, program, config))


def summary_from(m: Method, state: PointsToState) -> MethodSummary:
    g_reach = state.globally_reachable()
    ret_reach: set[str] = set()
    for v in _returned_vars(m):
        ret_reach |= state.tc(v)
    pairs = set()
    for qi, q in enumerate(m.params):
        node = param_node(q)
        if node in g_reach:
            pairs.add((GLOBAL, qi))
        if node in ret_reach:
            pairs.add((RETURN, qi))
        for pi, p in enumerate(m.params):
            if pi != qi and node in state.closure(state.heap.get(param_node(p), ())):
                pairs.add((pi, qi))
    return MethodSummary(frozenset(pairs), factory_from(m, state))


def compute_summaries(
    program: Program, config: AnalysisConfig | None = None, max_rounds: int = 1000
) -> dict[str, MethodSummary]:
    """Summaries for every method, iterated to a fixpoint over the call graph.

    Factory flags start optimistic and pairs start empty; both only move one
    way (flags drop, pairs grow), so the iteration terminates.
    """
    config = config or AnalysisConfig()
    summaries = {m.name: MethodSummary(frozenset(), True) for m in program}
    for _ in range(max_rounds):
        changed = False
        for m in program:
            new = summary_from(m, pointer_analysis(m, summaries, program, config))
            old = summaries[m.name]
            merged = MethodSummary(old.pairs | new.pairs, old.factory and new.factory)
            if merged != old:
                summaries[m.name] = merged
                changed = True
        if not changed:
            return summaries
    raise RuntimeError("method summaries did not converge")


# ---------------------------------------------------------------------------
# escape, liveness, reachability


def escape_analysis(m: Method, state: PointsToState) -> set[str]:
    """Sites that may leave the method: returned, handed to globals or the
    caller's objects (directly, through a call summary, or by reachability)."""
    escaping = state.externally_reachable(m.params)
    for v in _returned_vars(m):
        escaping |= state.tc(v)
    return escaping & state.sites


def _uses(s: Stmt) -> set[str]:
    if isinstance(s, Free):
        return set()
    if isinstance(s, Copy) and is_shadow(s.dst):
        return set()
    return {v for v in uses(s) if not is_shadow(v)}


def _defs(s: Stmt) -> set[str]:
    return {v for v in defs(s) if not is_shadow(v)}


def live_in(m: Method) -> list[set[str]]:
    """Variables live on entry to each statement."""
    n = len(m.stmts)
    lin: list[set[str]] = [set() for _ in range(n)]
    preds = m.preds()
    todo = deque(range(n - 1, -1, -1))
    queued = set(todo)
    while todo:
        i = todo.popleft()
        queued.discard(i)
        out: set[str] = set()
        for j in m.succ[i]:
            out |= lin[j]
        new = (out - _defs(m.stmts[i])) | _uses(m.stmts[i])
        if new != lin[i]:
            lin[i] = new
            for p in preds[i]:
                if p not in queued:
                    queued.add(p)
                    todo.append(p)
    return lin


def liveness(m: Method) -> dict[int, set[str]]:
    """Edge id -> variables live on that edge."""
    lin = live_in(m)
    return {e.id: set(lin[e.dst]) for e in m.edges}


def escape_statements(m: Method, state: PointsToState) -> dict[str, set[int]]:
    """For each externally reachable site, the statements that may expose it."""
    external = state.externally_reachable(m.params) & state.sites
    out: dict[str, set[int]] = {s: set() for s in external}
    for i, s in enumerate(m.stmts):
        if not isinstance(s, (Store, StaticStore, Call)):
            continue
        reach: set[str] = set()
        for v in _uses(s):
            reach |= state.tc(v)
        for site in reach & external:
            out[site].add(i)
    return out


def reachable_per_edge(
    m: Method, state: PointsToState, live: dict[int, set[str]]
) -> dict[int, set[str]]:
    """Edge id -> sites whose objects may still be reachable on that edge.

    A site is reachable when a live variable reaches it, or when it may have
    been exposed to globals or the caller on some path to the edge.
    """
    edges = m.edges
    exposing = escape_statements(m, state)
    # forward may-analysis: exposed sites at statement exit
    exposed_out: list[set[str]] = [set() for _ in m.stmts]
    preds = m.preds()
    changed = True
    while changed:
        changed = False
        for i in range(len(m.stmts)):
            inn: set[str] = set()
            for p in preds[i]:
                inn |= exposed_out[p]
            new = inn | {site for site, stmts in exposing.items() if i in stmts}
            if new != exposed_out[i]:
                exposed_out[i] = new
                changed = True
    reach: dict[int, set[str]] = {}
    for e in edges:
        r: set[str] = set()
        for v in live[e.id]:
            r |= state.tc(v)
        reach[e.id] = (r & state.sites) | exposed_out[e.src]
    return reach


@dataclass(frozen=True)
class FreePoint:
    edge: int
    site: str


def _edge_graph(m: Method) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_node(("n", 0))
    for e in m.edges:
        g.add_edge(("n", e.src), ("e", e.id))
        g.add_edge(("e", e.id), ("n", e.dst))
    return g


def _dominates(idom: dict, a, b) -> bool:
    node = b
    while True:
        if node == a:
            return True
        parent = idom.get(node)
        if parent is None or parent == node:
            return False
        node = parent


def _reaches_avoiding(g: nx.DiGraph, starts: Iterable, target, avoid) -> bool:
    seen = set()
    todo = [s for s in starts if s != avoid]
    while todo:
        n = todo.pop()
        if n == target:
            return True
        if n in seen:
            continue
        seen.add(n)
        todo.extend(x for x in g.successors(n) if x != avoid and x not in seen)
    return False


def alloc_statements(m: Method, state: PointsToState) -> dict[str, set[int]]:
    out: dict[str, set[int]] = {s: set() for s in state.sites}
    for i, s in enumerate(m.stmts):
        if isinstance(s, New):
            out[s.site].add(i)
        elif i in state.factory_calls:
            out[s.site].add(i)
    return out


def insert_free_points(
    m: Method, reach: dict[int, set[str]], state: PointsToState
) -> list[FreePoint]:
    """Edges where a site's objects stop being reachable.

    A frontier edge leaves a statement that allocates the site or is entered
    with the site reachable, and has the site unreachable.  A frontier edge
    dominated by another one is dropped unless a fresh allocation can occur
    in between.
    """
    edges = m.edges
    incoming: dict[int, list[Edge]] = {i: [] for i in range(len(m.stmts))}
    for e in edges:
        incoming[e.dst].append(e)
    allocs = alloc_statements(m, state)
    g = _edge_graph(m)
    idom = nx.immediate_dominators(g, ("n", 0))
    points = []
    for site in sorted(state.sites):
        def entered_reachable(u: int) -> bool:
            return u in allocs[site] or any(site in reach[e.id] for e in incoming[u])

        frontier = [e for e in edges if entered_reachable(e.src) and site not in reach[e.id]]
        starts = [("n", a) for a in allocs[site]]
        kept = []
        for b in frontier:
            redundant = any(
                a.id != b.id
                and _dominates(idom, ("e", a.id), ("e", b.id))
                and not _reaches_avoiding(g, starts, ("e", b.id), ("e", a.id))
                for a in frontier
            )
            if not redundant:
                kept.append(b)
        points.extend(FreePoint(e.id, site) for e in kept)
    points.sort(key=lambda p: (p.edge, p.site))
    return points


# ---------------------------------------------------------------------------
# whole program


@dataclass
class MethodAnalysis:
    method: Method
    points_to: PointsToState
    summary: MethodSummary
    escapes: set[str]
    live: dict[int, set[str]]
    reach: dict[int, set[str]]
    free_points: list[FreePoint]

    def to_json(self) -> dict:
        m = self.method
        return {
            "params": list(m.params),
            "summary": self.summary.to_json(m.params),
            "sites": sorted(self.points_to.sites),
            "escaping": sorted(self.escapes),
            "points_to": self.points_to.to_json(),
            "edges": [
                {
                    "id": e.id,
                    "src": e.src,
                    "dst": e.dst,
                    "live": sorted(self.live[e.id]),
                    "reachable": sorted(self.reach[e.id]),
                }
                for e in m.edges
            ],
            "free_points": [{"edge": p.edge, "site": p.site} for p in self.free_points],
        }


@dataclass
class ProgramAnalysis:
    summaries: dict[str, MethodSummary]
    methods: dict[str, MethodAnalysis]

    def to_json(self) -> dict:
        return {
            "methods": {n: a.to_json() for n, a in self.methods.items()},
            "stats": self.stats(),
        }

    def stats(self) -> dict:
        return {
            "methods": len(self.methods),
            "sites": sum(len(a.points_to.sites) for a in self.methods.values()),
            "escaping_sites": sum(len(a.escapes) for a in self.methods.values()),
            "free_points": sum(len(a.free_points) for a in self.methods.values()),
        }


def analyze_method(
    m: Method,
    summaries: dict[str, MethodSummary],
    program: Program | None = None,
    config: AnalysisConfig | None = None,
) -> MethodAnalysis:
    state = pointer_analysis(m, summaries, program, config)
    live = liveness(m)
    reach = reachable_per_edge(m, state, live)
    return MethodAnalysis(
        method=m,
        points_to=state,
        summary=summaries.get(m.name) or summary_from(m, state),
        escapes=escape_analysis(m, state),
        live=live,
        reach=reach,
        free_points=insert_free_points(m, reach, state),
    )


def analyze(program: Program, config: AnalysisConfig | None = None) -> ProgramAnalysis:
    summaries = compute_summaries(program, config)
    return ProgramAnalysis(
        summaries,
        {m.name: analyze_method(m, summaries, program, config) for m in program},
    )


# ---------------------------------------------------------------------------
# instrumentation


def instrument_method(m: Method, ma: MethodAnalysis) -> Method:
    """Insert ``free`` statements on free-point edges.

    Each allocation of a site with free points is followed by a shadow copy
    ``__free_<site> = v``; ``free site __free_<site>`` then refers to the
    most recent object of that site even after ``v`` is overwritten.
    """
    by_edge: dict[int, list[str]] = {}
    for p in ma.free_points:
        by_edge.setdefault(p.edge, []).append(p.site)
    if not by_edge:
        return m
    tracked = {p.site for p in ma.free_points}
    shadows: dict[int, Copy] = {}
    for site, stmts in alloc_statements(m, ma.points_to).items():
        if site in tracked:
            for i in stmts:
                shadows[i] = Copy(shadow_var(site), m.stmts[i].dst)

    stmts = list(m.stmts)
    succ = [list(t) for t in m.succ]
    for e in m.edges:
        chain: list[Stmt] = []
        if e.src in shadows:
            chain.append(shadows[e.src])
        chain.extend(Free(site, shadow_var(site)) for site in sorted(by_edge.get(e.id, ())))
        if not chain:
            continue
        first = len(stmts)
        for k, s in enumerate(chain):
            stmts.append(s)
            succ.append([first + k + 1] if k + 1 < len(chain) else [e.dst])
        pos = [k for k, t in enumerate(m.succ[e.src]) if t == e.dst]
        # an edge id identifies the occurrence among equal targets
        nth = [x.id for x in m.edges if x.src == e.src and x.dst == e.dst].index(e.id)
        succ[e.src][pos[nth]] = first
    return with_stmts(m, stmts, [tuple(t) for t in succ])


def instrument(program: Program, result: ProgramAnalysis) -> Program:
    return Program({
        name: instrument_method(m, result.methods[name]) if name in result.methods else m
        for name, m in program.methods.items()
    })
