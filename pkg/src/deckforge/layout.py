"""Page-aligned layout: deck sets, disjoint-set splitting, section packing.

Every deck's member set must be mappable independently, so any two deck sets
that overlap are split until the layout consists of pairwise-disjoint sets,
each placed in its own page-aligned section.  Mapping one deck then never
exposes a page owned by functions outside it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .analysis import DeckKind, InstrumentationPlan
from .errors import DeckforgeError
from .model import ProgramModel

log = logging.getLogger("deckforge.layout")

DEFAULT_PAGE_SIZE = 4096


class EmptyInputSet(DeckforgeError):
    """Disjoint-set creation was handed an empty input set."""


@dataclass(frozen=True)
class DeckSet:
    """Statically known member set of one deck."""

    kind: DeckKind
    origin: int  # callee id, loop id, or address-taken root id
    members: tuple[int, ...]


@dataclass(frozen=True)
class Placement:
    section: int
    offset: int


@dataclass
class DisjointLayout:
    disjoint_sets: list[frozenset[int]]
    page_size: int
    placements: dict[int, Placement]
    section_sizes: list[int]
    linker_script: str

    def section_start_page(self, section: int) -> int:
        return sum(self.section_sizes[:section]) // self.page_size

    def function_pages(self, function_id: int, size: int) -> tuple[int, ...]:
        """Global page indices covered by a function's bytes."""
        place = self.placements[function_id]
        start = self.section_start_page(place.section) * self.page_size + place.offset
        first = start // self.page_size
        last = (start + size - 1) // self.page_size
        return tuple(range(first, last + 1))

    @property
    def total_pages(self) -> int:
        return sum(self.section_sizes) // self.page_size


@dataclass(frozen=True)
class GrowthReport:
    baseline_bytes: int
    custom_bytes: int
    worst_case_bytes: int

    @property
    def growth(self) -> float:
        return self.custom_bytes / self.baseline_bytes

    @property
    def improvement(self) -> float:
        return self.worst_case_bytes / self.custom_bytes


def build_deck_sets(
    model: ProgramModel, plan: InstrumentationPlan
) -> list[DeckSet]:
    """Deck sets in fixed order: singles, loops, reachables, indirects.

    Indirect sets exist for every address-taken function, since any of them
    may become a runtime target.
    """
    sets: list[DeckSet] = []

    single_callees = sorted(
        {p.deck_id for p in plan.points if p.kind is DeckKind.SINGLE}
    )
    for fid in single_callees:
        sets.append(DeckSet(DeckKind.SINGLE, fid, (fid,)))

    for lid in sorted(plan.loop_function_sets):
        members = tuple(sorted(plan.loop_function_sets[lid]))
        sets.append(DeckSet(DeckKind.LOOP, lid, members))

    reachable_callees = sorted(
        {p.deck_id for p in plan.points if p.kind is DeckKind.REACHABLE}
    )
    for fid in reachable_callees:
        members = tuple(sorted(plan.reachable_closure[fid]))
        sets.append(DeckSet(DeckKind.REACHABLE, fid, members))

    for fid in sorted(model.functions):
        if model.functions[fid].address_taken:
            members = tuple(sorted(plan.reachable_closure[fid]))
            sets.append(DeckSet(DeckKind.INDIRECT, fid, members))

    return sets


def create_disjoint_sets(deck_sets: list) -> list[frozenset[int]]:
    """Split overlapping sets until all are pairwise disjoint.

    Repeatedly takes the head set A and intersects it with every remaining
    set B: a non-empty intersection is pushed as its own set and removed
    from both A and B.  Empty residuals are dropped, so the output never
    contains an empty set.  The union of members is preserved and every
    input set equals a union of output sets.
    """
    pending: list[frozenset[int]] = []
    for i, s in enumerate(deck_sets):
        fs = frozenset(s)
        if not fs:
            raise EmptyInputSet(f"input set at position {i} is empty")
        pending.append(fs)

    disjoint: list[frozenset[int]] = []
    while pending:
        head = pending[0]
        rest = pending[1:]
        pending = []
        for other in rest:
            shared = head & other
            head_only = head - shared
            other_only = other - shared
            if not shared:
                pending.append(other)
                continue
            if not head_only and not other_only:
                continue  # duplicate of head, absorbed
            if other_only:
                pending.append(other_only)
            pending.append(shared)
            head = head_only
        if head:
            disjoint.append(head)
    return disjoint


def assign_pages(
    model: ProgramModel,
    disjoint_sets: list[frozenset[int]],
    page_size: int = DEFAULT_PAGE_SIZE,
) -> DisjointLayout:
    """Pack each disjoint set into its own page-aligned section.

    Functions in no set get an implicit singleton section appended last, so
    the layout always covers the whole program.  Members pack contiguously
    in ascending id order; section sizes round up to a page multiple.
    """
    covered: set[int] = set()
    for s in disjoint_sets:
        for fid in s:
            if fid not in model.functions:
                raise ValueError(f"disjoint set references unknown function {fid}")
        covered |= s

    sections: list[list[int]] = [sorted(s) for s in disjoint_sets]
    for fid in sorted(model.functions):
        if fid not in covered:
            sections.append([fid])

    placements: dict[int, Placement] = {}
    section_sizes: list[int] = []
    for index, members in enumerate(sections):
        offset = 0
        for fid in members:
            placements[fid] = Placement(index, offset)
            offset += model.functions[fid].size
        pages = -(-offset // page_size)  # ceil
        section_sizes.append(pages * page_size)

    script = _render_linker_script(model, sections, section_sizes, page_size)
    return DisjointLayout(
        disjoint_sets=[frozenset(m) for m in sections],
        page_size=page_size,
        placements=placements,
        section_sizes=section_sizes,
        linker_script=script,
    )


def _render_linker_script(
    model: ProgramModel,
    sections: list[list[int]],
    section_sizes: list[int],
    page_size: int,
) -> str:
    lines = [f"PAGESIZE {page_size}"]
    for index, members in enumerate(sections):
        used = sum(model.functions[f].size for f in members)
        names = " ".join(model.functions[f].name for f in members)
        lines.append(
            f"SECTION deck{index} ALIGN {page_size} "
            f"SIZE {section_sizes[index]} USED {used} {{ {names} }}"
        )
    return "\n".join(lines) + "\n"


def growth_report(model: ProgramModel, layout: DisjointLayout) -> GrowthReport:
    """Binary-size accounting: contiguous baseline vs. this layout vs. the
    one-section-per-function worst case."""
    page = layout.page_size
    total = sum(f.size for f in model.functions.values())
    baseline = -(-total // page) * page if total else 0
    custom = sum(layout.section_sizes)
    worst = sum(-(-f.size // page) * page for f in model.functions.values())
    return GrowthReport(baseline, custom, worst)


def build_layout(
    model: ProgramModel,
    plan: InstrumentationPlan,
    page_size: int = DEFAULT_PAGE_SIZE,
) -> tuple[list[DeckSet], DisjointLayout]:
    """Full layout pipeline: deck sets -> disjoint sets -> page assignment.

    The entry function is kept in a section of its own: its pages stay
    mapped for the whole run, so co-locating anything with it would pin
    that code permanently.
    """
    deck_sets = build_deck_sets(model, plan)
    inputs: list[frozenset[int]] = [frozenset(ds.members) for ds in deck_sets]
    if any(model.entry in s for s in inputs):
        inputs.append(frozenset({model.entry}))
    disjoint = create_disjoint_sets(inputs)
    layout = assign_pages(model, disjoint, page_size)
    log.debug(
        "%d deck sets split into %d disjoint sets; %d sections, %d pages",
        len(deck_sets), len(disjoint), len(layout.disjoint_sets),
        layout.total_pages,
    )
    return deck_sets, layout


def verify_partition(
    inputs: list[frozenset[int]], outputs: list[frozenset[int]]
) -> list[str]:
    """Check the three partition laws; returns human-readable violations."""
    problems: list[str] = []
    for i, a in enumerate(outputs):
        for j in range(i + 1, len(outputs)):
            if a & outputs[j]:
                problems.append(f"output sets {i} and {j} overlap")
    in_union = frozenset().union(*inputs) if inputs else frozenset()
    out_union = frozenset().union(*outputs) if outputs else frozenset()
    if in_union != out_union:
        problems.append("union of members not preserved")
    for i, s in enumerate(inputs):
        pieces = [o for o in outputs if o <= s]
        rebuilt = frozenset().union(*pieces) if pieces else frozenset()
        if rebuilt != s:
            problems.append(f"input set {i} is not a union of output sets")
        for o in outputs:
            if o & s and not o <= s:
                problems.append(f"output set straddles input set {i}")
    return problems


# -- layout document ---------------------------------------------------------


def layout_to_doc(model: ProgramModel, layout: DisjointLayout) -> dict:
    sections = []
    for index, members in enumerate(layout.disjoint_sets):
        start = layout.section_start_page(index)
        size = layout.section_sizes[index]
        sections.append(
            {
                "index": index,
                "functions": sorted(members),
                "size": size,
                "pages": list(range(start, start + size // layout.page_size)),
            }
        )
    placements = {
        str(fid): {
            "section": place.section,
            "offset": place.offset,
            "pages": list(
                layout.function_pages(fid, model.functions[fid].size)
            ),
        }
        for fid, place in sorted(layout.placements.items())
    }
    return {
        "page_size": layout.page_size,
        "sections": sections,
        "placements": placements,
    }


def layout_from_doc(model: ProgramModel, doc: dict) -> DisjointLayout:
    """Rebuild a layout from its exported document."""
    page_size = doc["page_size"]
    sections = sorted(doc["sections"], key=lambda s: s["index"])
    placements = {
        int(fid): Placement(p["section"], p["offset"])
        for fid, p in doc["placements"].items()
    }
    section_sizes = [s["size"] for s in sections]
    members = [frozenset(s["functions"]) for s in sections]
    script = _render_linker_script(
        model, [sorted(m) for m in members], section_sizes, page_size
    )
    return DisjointLayout(members, page_size, placements, section_sizes, script)
