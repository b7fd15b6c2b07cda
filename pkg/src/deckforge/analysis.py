"""Deck planning: encompassed-set computation and instrumentation placement.

A function is encompassed when it can run inside some loop: it is a callee
(or indirect static target) of a loop-enclosed call site, or reachable from
one through direct calls.  Encompassed functions carry no instrumentation
except at indirect call sites, which must always be resolved at runtime.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

from .model import ProgramModel, direct_callgraph

log = logging.getLogger("deckforge.analysis")

#: deck_id used for indirect points, whose member set is only known at runtime
RUNTIME_TARGET = "runtime-target"


class DeckKind(str, Enum):
    SINGLE = "single"
    LOOP = "loop"
    REACHABLE = "reachable"
    INDIRECT = "indirect"


_KIND_ORDER = {k: i for i, k in enumerate(DeckKind)}


@dataclass(frozen=True)
class EncompassedSets:
    encompassed: frozenset[int]
    non_encompassed: frozenset[int]


@dataclass(frozen=True)
class DeckPoint:
    """One begin/end pair: ``anchor`` is a call-site id, or a loop id for
    Loop decks.  The paired end is implicit (one end per begin)."""

    kind: DeckKind
    anchor: int
    deck_id: int | str


@dataclass(frozen=True)
class InstrumentationPlan:
    points: tuple[DeckPoint, ...]
    encompassed_sets: EncompassedSets
    reachable_closure: dict[int, frozenset[int]]
    loop_function_sets: dict[int, frozenset[int]]

    def point_for_site(self, site_id: int) -> DeckPoint | None:
        return self._site_index.get(site_id)

    def point_for_loop(self, loop_id: int) -> DeckPoint | None:
        return self._loop_index.get(loop_id)

    @cached_property
    def _site_index(self) -> dict[int, DeckPoint]:
        return {
            p.anchor: p for p in self.points if p.kind is not DeckKind.LOOP
        }

    @cached_property
    def _loop_index(self) -> dict[int, DeckPoint]:
        return {p.anchor: p for p in self.points if p.kind is DeckKind.LOOP}


def _closure_from(seeds, graph: dict[int, set[int]]) -> set[int]:
    """All nodes reachable from ``seeds`` (inclusive) over direct-call edges."""
    seen: set[int] = set()
    work = deque(seeds)
    while work:
        f = work.popleft()
        if f in seen:
            continue
        seen.add(f)
        work.extend(graph.get(f, ()))
    return seen


def compute_encompassed(model: ProgramModel) -> EncompassedSets:
    """Partition functions into encompassed / non-encompassed sets."""
    graph = direct_callgraph(model)
    seeds: set[int] = set()
    for site in model.call_sites.values():
        if site.loop is None:
            continue
        if site.is_direct:
            seeds.add(site.callee)
        else:
            # any static target may be invoked inside the loop
            seeds.update(site.targets)
    encompassed = _closure_from(seeds, graph)
    non_encompassed = set(model.functions) - encompassed
    return EncompassedSets(frozenset(encompassed), frozenset(non_encompassed))


def reachable_closures(model: ProgramModel) -> dict[int, frozenset[int]]:
    """Per function: itself plus everything reachable through direct calls."""
    graph = direct_callgraph(model)
    return {
        fid: frozenset(_closure_from([fid], graph)) for fid in model.functions
    }


def _sites_under_loop(model: ProgramModel, loop_id: int) -> list[int]:
    """Call sites directly in the loop or in any loop nested below it."""
    collected: list[int] = []
    work = deque([loop_id])
    while work:
        lid = work.popleft()
        collected.extend(model.loops[lid].sites)
        work.extend(child.id for child in model.child_loops(lid))
    return collected


def loop_function_set(
    model: ProgramModel, loop_id: int, closures: dict[int, frozenset[int]]
) -> frozenset[int]:
    """Every function reachable interprocedurally from within the loop."""
    members: set[int] = set()
    for sid in _sites_under_loop(model, loop_id):
        site = model.call_sites[sid]
        if site.is_direct:
            members |= closures[site.callee]
        else:
            for t in site.targets:
                members |= closures[t]
    return frozenset(members)


def plan_instrumentation(model: ProgramModel) -> InstrumentationPlan:
    """Place deck begin/end points for the whole program.

    Non-encompassed functions get a Loop point per outermost loop that can
    reach a call, and Single or Reachable points at direct call sites outside
    loops.  Indirect sites are instrumented everywhere.
    """
    enc = compute_encompassed(model)
    closures = reachable_closures(model)

    points: list[DeckPoint] = []
    loop_sets: dict[int, frozenset[int]] = {}

    for fid in model.functions:
        if fid in enc.encompassed:
            continue
        for loop in model.outermost_loops(fid):
            members = loop_function_set(model, loop.id, closures)
            if not members:
                continue  # a call-free loop needs no deck
            loop_sets[loop.id] = members
            points.append(DeckPoint(DeckKind.LOOP, loop.id, loop.id))

    for site in model.call_sites.values():
        if site.is_indirect:
            points.append(DeckPoint(DeckKind.INDIRECT, site.id, RUNTIME_TARGET))
            continue
        if site.caller in enc.encompassed or site.loop is not None:
            continue  # covered by the admitting deck or by the loop deck
        if site.callee in enc.encompassed:
            points.append(DeckPoint(DeckKind.REACHABLE, site.id, site.callee))
        else:
            points.append(DeckPoint(DeckKind.SINGLE, site.id, site.callee))

    points.sort(key=lambda p: (_KIND_ORDER[p.kind], p.anchor))
    log.debug(
        "planned %d deck points (%d functions encompassed, %d loops instrumented)",
        len(points), len(enc.encompassed), len(loop_sets),
    )
    return InstrumentationPlan(tuple(points), enc, closures, loop_sets)


# -- plan document ----------------------------------------------------------


def plan_to_doc(plan: InstrumentationPlan) -> dict:
    """Stable JSON-ready form of a plan (points plus both closures)."""
    return {
        "points": [
            {"kind": p.kind.value, "anchor": p.anchor, "deck_id": p.deck_id}
            for p in plan.points
        ],
        "encompassed": sorted(plan.encompassed_sets.encompassed),
        "non_encompassed": sorted(plan.encompassed_sets.non_encompassed),
        "reachable_closure": {
            str(fid): sorted(members)
            for fid, members in sorted(plan.reachable_closure.items())
        },
        "loop_function_sets": {
            str(lid): sorted(members)
            for lid, members in sorted(plan.loop_function_sets.items())
        },
    }
