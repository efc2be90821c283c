"""Line-based event log.

::

    # comment
    e <event> <id> ...     event with object ids in signature order
    g <id>                 object became garbage
    a <id> <site>          allocation (optional)

Ids are non-negative integers.  A runtime may recycle an id once its object
is garbage.  The reader gives every recycled id a fresh identity (larger than
any id in the document) so the monitor never confuses the two objects; an
``a`` record announces the reuse, otherwise a warning is logged.
"""

from __future__ import annotations

import logging
import re
from typing import Iterable

from .spec import (
    Allocation,
    EventSignature,
    Garbage,
    ParametricEvent,
    TraceItem,
    Valuation,
)

log = logging.getLogger(__name__)


class LogFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _positional_key(var: str):
    m = re.fullmatch(r"_(\d+)", var)
    return (0, int(m.group(1)), "") if m else (1, 0, var)


def event_ids(ev: ParametricEvent, alphabet: dict[str, EventSignature] | None = None) -> list[int]:
    sig = (alphabet or {}).get(ev.name)
    if sig is not None:
        return [ev.valuation[p] for p in sig.params]
    return [ev.valuation[v] for v in sorted(ev.valuation, key=_positional_key)]


def write_log(
    trace: Iterable[TraceItem], alphabet: dict[str, EventSignature] | None = None
) -> str:
    lines = []
    for item in trace:
        if isinstance(item, ParametricEvent):
            lines.append(" ".join(["e", item.name, *map(str, event_ids(item, alphabet))]))
        elif isinstance(item, Garbage):
            lines.append(f"g {item.obj}")
        elif isinstance(item, Allocation):
            lines.append(f"a {item.obj} {item.site}")
        else:
            raise TypeError(f"cannot log {item!r}")
    return "\n".join(lines) + ("\n" if lines else "")


def _id(tok: str, lineno: int) -> int:
    if not re.fullmatch(r"\d+", tok):
        raise LogFormatError(f"bad object id {tok!r}", lineno)
    return int(tok)


def read_log(
    doc: str, alphabet: dict[str, EventSignature] | None = None
) -> list[TraceItem]:
    """Parse a log.  Events named in ``alphabet`` bind its variables; others
    bind positional variables ``_0``, ``_1``..."""
    alphabet = alphabet or {}
    rows = []
    max_id = -1
    for lineno, raw in enumerate(doc.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        if kind == "e":
            if len(parts) < 2:
                raise LogFormatError("event record without a name", lineno)
            ids = [_id(t, lineno) for t in parts[2:]]
            sig = alphabet.get(parts[1])
            if sig is not None and len(sig.params) != len(ids):
                raise LogFormatError(
                    f"event {parts[1]} takes {len(sig.params)} ids, got {len(ids)}", lineno
                )
            rows.append((lineno, "e", parts[1], ids))
        elif kind == "g":
            if len(parts) != 2:
                raise LogFormatError("garbage record takes exactly one id", lineno)
            ids = [_id(parts[1], lineno)]
            rows.append((lineno, "g", None, ids))
        elif kind == "a":
            if len(parts) != 3:
                raise LogFormatError("allocation record takes an id and a site", lineno)
            ids = [_id(parts[1], lineno)]
            rows.append((lineno, "a", parts[2], ids))
        else:
            raise LogFormatError(f"unknown record kind {kind!r}", lineno)
        max_id = max([max_id, *ids])

    fresh = max_id + 1
    current: dict[int, int] = {}
    retired: set[int] = set()
    out: list[TraceItem] = []

    def renew(raw_id: int) -> int:
        nonlocal fresh
        current[raw_id] = fresh
        fresh += 1
        retired.discard(raw_id)
        return current[raw_id]

    for lineno, kind, name, ids in rows:
        if kind == "a":
            (raw_id,) = ids
            obj = renew(raw_id) if raw_id in current else current.setdefault(raw_id, raw_id)
            retired.discard(raw_id)
            out.append(Allocation(obj, name))
            continue
        if kind == "g":
            (raw_id,) = ids
            if raw_id in retired:
                raise LogFormatError(f"object {raw_id} is already garbage", lineno)
            obj = current.setdefault(raw_id, raw_id)
            retired.add(raw_id)
            out.append(Garbage(obj))
            continue
        mapped = []
        for raw_id in ids:
            if raw_id in retired:
                log.warning("line %d: id %d reused after garbage; treated as a new object",
                            lineno, raw_id)
                mapped.append(renew(raw_id))
            else:
                mapped.append(current.setdefault(raw_id, raw_id))
        sig = alphabet.get(name)
        names = sig.params if sig is not None else tuple(f"_{k}" for k in range(len(mapped)))
        try:
            val = Valuation(zip(names, mapped))
        except ValueError as exc:
            raise LogFormatError(str(exc), lineno) from None
        if len(val) != len(mapped) or any(val[n] != o for n, o in zip(names, mapped)):
            raise LogFormatError(f"event {name} binds one variable to two objects", lineno)
        out.append(ParametricEvent(name, val))
    return out
