"""Deterministic replay of execution traces against a plan and layout.

The simulator walks a well-nested event trace and fires the runtime API
(deck_single/loop/reachable/indirect plus paired ends) exactly where the
plan anchors them, maintaining per-page reference counts.  A page is
available while its count is positive.  Two optional behaviors mirror the
runtime's production configuration:

* indirect-deck caching (IDC): inside an active outermost loop, repeat
  indirect calls to a cached target skip the runtime entirely and all
  indirect-deck teardowns are deferred to the loop exit;
* stack cleaning (SC): along a chain of nested single decks only the
  current function and its immediate neighbor stay mapped (window 2).
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

from .analysis import DeckKind, InstrumentationPlan
from .errors import DeckforgeError
from .layout import DisjointLayout
from .model import ProgramModel

log = logging.getLogger("deckforge.simulator")


class TraceError(DeckforgeError):
    """Ill-nested or illegal trace event; message carries the position."""


class UnknownTarget(DeckforgeError):
    """Indirect-call target outside the site's static target set."""


class UnpairedEnd(DeckforgeError):
    """A deck teardown arrived without a matching begin."""


@dataclass(frozen=True)
class TraceEvent:
    kind: str  # call | icall | ret | loop_enter | loop_exit
    site: int | None = None
    target: int | None = None
    loop: int | None = None


@dataclass(frozen=True)
class LogRecord:
    seq: int
    api: str
    arg: str
    pages: tuple[int, ...]


def parse_trace(text: str) -> list[TraceEvent]:
    """Parse the line-oriented trace format.

    Events: ``call <site>``, ``icall <site> <target>``, ``ret``,
    ``loop_enter <loop>``, ``loop_exit <loop>``.  Blank lines and lines
    starting with ``#`` are ignored.
    """
    events: list[TraceEvent] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        kind, args = parts[0], parts[1:]
        try:
            if kind == "call" and len(args) == 1:
                events.append(TraceEvent("call", site=int(args[0])))
            elif kind == "icall" and len(args) == 2:
                events.append(
                    TraceEvent("icall", site=int(args[0]), target=int(args[1]))
                )
            elif kind == "ret" and not args:
                events.append(TraceEvent("ret"))
            elif kind == "loop_enter" and len(args) == 1:
                events.append(TraceEvent("loop_enter", loop=int(args[0])))
            elif kind == "loop_exit" and len(args) == 1:
                events.append(TraceEvent("loop_exit", loop=int(args[0])))
            else:
                raise ValueError
        except ValueError:
            raise TraceError(f"line {lineno}: cannot parse event {line!r}") from None
    return events


def render_log(records: list[LogRecord]) -> str:
    lines = [
        f"{r.seq} {r.api} {r.arg} pages={','.join(str(p) for p in r.pages)}"
        for r in records
    ]
    return "\n".join(lines) + "\n" if lines else ""


def parse_log(text: str) -> list[LogRecord]:
    records: list[LogRecord] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4 or not parts[3].startswith("pages="):
            raise TraceError(f"line {lineno}: cannot parse log record {line!r}")
        body = parts[3][len("pages=") :]
        pages = tuple(int(p) for p in body.split(",")) if body else ()
        records.append(LogRecord(int(parts[0]), parts[1], parts[2], pages))
    return records


@dataclass
class _ChainEntry:
    fid: int
    is_root: bool = False
    cleaned: bool = False


@dataclass
class _LoopInstance:
    loop_id: int
    cache: dict[int, None] = field(default_factory=dict)


class RuntimeState:
    """Reference counts, available pages, IDC caches, SC chains, and the log.

    One simulation owns its state exclusively; model, plan and layout are
    only read.
    """

    def __init__(
        self,
        model: ProgramModel,
        plan: InstrumentationPlan,
        layout: DisjointLayout,
        idc: bool = True,
        sc: bool = True,
    ):
        self.idc_enabled = idc
        self.sc_enabled = sc
        self.refcount: dict[int, int] = {p: 0 for p in range(layout.total_pages)}
        self.available: set[int] = set()
        self.log: list[LogRecord] = []
        self._open: Counter = Counter()
        self._entry = model.entry
        self._encompassed = plan.encompassed_sets.encompassed
        self._closures = plan.reachable_closure
        self._loop_sets = plan.loop_function_sets
        self._fn_pages = {
            fid: layout.function_pages(fid, fn.size)
            for fid, fn in model.functions.items()
        }
        self._chains: list[list[_ChainEntry]] = [[]]
        self._instances: list[_LoopInstance] = []

    # -- page accounting ---------------------------------------------------

    def pages_of(self, fid: int) -> tuple[int, ...]:
        return self._fn_pages[fid]

    def _inc_fn(self, fid: int) -> None:
        for page in self._fn_pages[fid]:
            self.refcount[page] += 1
            if self.refcount[page] == 1:
                self.available.add(page)

    def _dec_fn(self, fid: int) -> None:
        for page in self._fn_pages[fid]:
            if self.refcount[page] == 0:
                raise UnpairedEnd(f"page {page} refcount would go negative")
            self.refcount[page] -= 1
            if self.refcount[page] == 0:
                self.available.discard(page)

    def _record(self, api: str, arg) -> None:
        self.log.append(
            LogRecord(len(self.log), api, str(arg), tuple(sorted(self.available)))
        )

    def _close(self, key: tuple) -> None:
        if self._open[key] == 0:
            raise UnpairedEnd(f"{key[0]} deck end for {key[1]} without a begin")
        self._open[key] -= 1

    # -- runtime API ---------------------------------------------------------

    def deck_init(self) -> None:
        self._inc_fn(self._entry)
        self._record("deck_init", "-")

    def deck_single(self, callee: int, caller: int | None = None) -> None:
        self._inc_fn(callee)
        self._open[("single", callee)] += 1
        if self.sc_enabled:
            chain = self._chains[-1]
            if not chain:
                root = caller if caller is not None else self._entry
                chain.append(_ChainEntry(root, is_root=True))
            chain.append(_ChainEntry(callee))
            if len(chain) >= 3:
                victim = chain[-3]
                if not victim.cleaned:
                    self._dec_fn(victim.fid)
                    victim.cleaned = True
        self._record("deck_single", callee)

    def deck_single_end(self, callee: int) -> None:
        self._close(("single", callee))
        self._dec_fn(callee)
        if self.sc_enabled:
            chain = self._chains[-1]
            if not chain or chain[-1].is_root or chain[-1].fid != callee:
                raise UnpairedEnd(f"single deck for {callee} ended out of order")
            chain.pop()
            if len(chain) >= 2 and chain[-2].cleaned:
                self._inc_fn(chain[-2].fid)
                chain[-2].cleaned = False
            if len(chain) == 1 and chain[0].is_root:
                chain.pop()
        self._record("deck_single_end", callee)

    def deck_loop(self, loop_id: int) -> None:
        if loop_id not in self._loop_sets:
            raise ValueError(f"loop {loop_id} has no deck")
        for fid in sorted(self._loop_sets[loop_id]):
            self._inc_fn(fid)
        self._open[("loop", loop_id)] += 1
        self._record("deck_loop", loop_id)

    def deck_loop_end(self, loop_id: int) -> None:
        self._close(("loop", loop_id))
        for fid in sorted(self._loop_sets[loop_id]):
            self._dec_fn(fid)
        self._record("deck_loop_end", loop_id)

    def deck_reachable(self, callee: int) -> None:
        for fid in sorted(self._closures[callee]):
            self._inc_fn(fid)
        self._open[("reachable", callee)] += 1
        self._record("deck_reachable", callee)

    def deck_reachable_end(self, callee: int) -> None:
        self._close(("reachable", callee))
        for fid in sorted(self._closures[callee]):
            self._dec_fn(fid)
        self._record("deck_reachable_end", callee)

    def _indirect_members(self, target: int) -> list[int]:
        if target not in self._fn_pages:
            raise UnknownTarget(f"runtime target {target} is not a known function")
        if target in self._encompassed:
            return sorted(self._closures[target])
        return [target]

    def deck_indirect(self, target: int) -> None:
        for fid in self._indirect_members(target):
            self._inc_fn(fid)
        self._open[("indirect", target)] += 1
        self._record("deck_indirect", target)

    def deck_indirect_end(self, target: int) -> None:
        self._close(("indirect", target))
        for fid in self._indirect_members(target):
            self._dec_fn(fid)
        self._record("deck_indirect_end", target)

    # -- stack-cleaning chain boundaries -------------------------------------

    def sc_push_barrier(self) -> None:
        self._chains.append([])

    def sc_pop_barrier(self) -> None:
        chain = self._chains.pop()
        if chain:
            raise UnpairedEnd("single decks left open across a deck boundary")

    # -- indirect-deck caching ------------------------------------------------

    def idc_enter_loop(self, loop_id: int) -> None:
        self._instances.append(_LoopInstance(loop_id))

    def idc_active(self) -> bool:
        return bool(self._instances)

    def idc_check(self, target: int) -> bool:
        """Inlined fast-path check; a hit means no runtime call happens."""
        return target in self._instances[-1].cache

    def idc_register(self, target: int) -> None:
        self._instances[-1].cache[target] = None

    def idc_exit_loop(self, loop_id: int) -> None:
        """Replay every deferred indirect teardown and drop the cache."""
        instance = self._instances.pop()
        if instance.loop_id != loop_id:
            raise RuntimeError("loop instance stack out of sync")
        for target in instance.cache:
            self.deck_indirect_end(target)


@dataclass
class _Activation:
    fid: int
    via_single: bool = False
    pending: tuple[str, int] | None = None
    loop_stack: list[int] = field(default_factory=list)


def simulate(
    model: ProgramModel,
    plan: InstrumentationPlan,
    layout: DisjointLayout,
    trace: list[TraceEvent],
    idc: bool = True,
    sc: bool = True,
) -> list[LogRecord]:
    """Replay a trace and return the available-page log, one record per
    runtime API call.  A well-nested trace always finishes with reference
    counts equal to the post-init state."""
    state = RuntimeState(model, plan, layout, idc=idc, sc=sc)
    state.deck_init()
    stack = [_Activation(model.entry)]

    for pos, event in enumerate(trace):
        where = f"event {pos} ({event.kind})"
        act = stack[-1]
        if event.kind == "call":
            site = model.call_sites.get(event.site)
            if site is None or not site.is_direct:
                raise TraceError(f"{where}: no direct call site {event.site}")
            _check_site_position(site, act, where)
            point = plan.point_for_site(site.id)
            if point is not None and point.kind is DeckKind.SINGLE:
                state.deck_single(site.callee, caller=act.fid)
                stack.append(
                    _Activation(
                        site.callee, via_single=True, pending=("single", site.callee)
                    )
                )
            elif point is not None and point.kind is DeckKind.REACHABLE:
                state.deck_reachable(site.callee)
                if sc:
                    state.sc_push_barrier()
                stack.append(
                    _Activation(site.callee, pending=("reachable", site.callee))
                )
            else:
                # uninstrumented: covered by the loop/reachable deck that
                # admitted execution here
                if sc:
                    state.sc_push_barrier()
                stack.append(_Activation(site.callee))
        elif event.kind == "icall":
            site = model.call_sites.get(event.site)
            if site is None or not site.is_indirect:
                raise TraceError(f"{where}: no indirect call site {event.site}")
            _check_site_position(site, act, where)
            target = event.target
            if target not in site.targets:
                raise UnknownTarget(
                    f"{where}: target {target} outside static set of site {site.id}"
                )
            pending = None
            if idc and state.idc_active():
                if not state.idc_check(target):
                    state.deck_indirect(target)
                    state.idc_register(target)  # teardown deferred to loop exit
            else:
                state.deck_indirect(target)
                pending = ("indirect", target)
            if sc:
                state.sc_push_barrier()
            stack.append(_Activation(target, pending=pending))
        elif event.kind == "ret":
            if len(stack) == 1:
                raise TraceError(f"{where}: return from the entry function")
            if act.loop_stack:
                raise TraceError(f"{where}: return with open loop {act.loop_stack[-1]}")
            stack.pop()
            if act.pending is not None:
                kind, arg = act.pending
                if kind == "single":
                    state.deck_single_end(arg)
                elif kind == "reachable":
                    state.deck_reachable_end(arg)
                else:
                    state.deck_indirect_end(arg)
            if sc and not act.via_single:
                state.sc_pop_barrier()
        elif event.kind == "loop_enter":
            loop = model.loops.get(event.loop)
            if loop is None:
                raise TraceError(f"{where}: no loop {event.loop}")
            if loop.function != act.fid:
                raise TraceError(
                    f"{where}: loop {loop.id} is not in function {act.fid}"
                )
            top = act.loop_stack[-1] if act.loop_stack else None
            if loop.parent is None:
                if loop.id in act.loop_stack:
                    raise TraceError(f"{where}: loop {loop.id} already active")
            elif top != loop.parent:
                raise TraceError(
                    f"{where}: loop {loop.id} entered outside its parent {loop.parent}"
                )
            act.loop_stack.append(loop.id)
            if plan.point_for_loop(loop.id) is not None:
                state.deck_loop(loop.id)
                if sc:
                    state.sc_push_barrier()
            if idc and loop.parent is None:
                state.idc_enter_loop(loop.id)
        elif event.kind == "loop_exit":
            if not act.loop_stack or act.loop_stack[-1] != event.loop:
                raise TraceError(f"{where}: loop {event.loop} is not the active loop")
            loop = model.loops[event.loop]
            act.loop_stack.pop()
            if plan.point_for_loop(loop.id) is not None:
                state.deck_loop_end(loop.id)
                if sc:
                    state.sc_pop_barrier()
            if idc and loop.parent is None:
                state.idc_exit_loop(loop.id)
        else:  # pragma: no cover - parse_trace never yields other kinds
            raise TraceError(f"{where}: unknown event kind")

    if len(stack) != 1 or stack[0].loop_stack:
        raise TraceError("trace ended with open calls or loops")
    log.debug(
        "replayed %d events into %d log records (idc=%s sc=%s)",
        len(trace), len(state.log), idc, sc,
    )
    return state.log


def _check_site_position(site, act: _Activation, where: str) -> None:
    if site.caller != act.fid:
        raise TraceError(
            f"{where}: site {site.id} belongs to function {site.caller}, "
            f"but function {act.fid} is executing"
        )
    innermost = act.loop_stack[-1] if act.loop_stack else None
    if site.loop != innermost:
        raise TraceError(
            f"{where}: site {site.id} executes in loop {site.loop}, "
            f"but the active loop is {innermost}"
        )
