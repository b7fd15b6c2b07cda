"""Gadget-surface metrics over available-page logs.

Per-function gadget counts are projected onto pages through the layout
(byte-proportional split, remainder to the function's first page), then
each distinct available-page set from a log is scored: the reduction for a
set is (T - T_AP) / T * 100, computed as an exact rational and rendered at
one decimal.  Chain verdicts report whether the write-what-where, argument
and syscall components are simultaneously exposed.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import DeckforgeError
from .layout import DisjointLayout
from .model import ProgramModel

GADGET_CLASSES = ("rop", "jop", "cop", "special")


class ZeroTotal(DeckforgeError):
    """Reduction is undefined for a program with zero gadgets."""


@dataclass(frozen=True)
class PageCounts:
    rop: int = 0
    jop: int = 0
    cop: int = 0
    special: int = 0

    @property
    def total(self) -> int:
        return self.rop + self.jop + self.cop + self.special

    def get(self, cls: str) -> int:
        return getattr(self, cls)


@dataclass(frozen=True)
class PageGadgetIndex:
    counts: dict[int, PageCounts]
    flags: dict[int, frozenset[str]]
    num_pages: int

    def class_total(self, cls: str) -> int:
        return sum(c.get(cls) for c in self.counts.values())

    @property
    def total(self) -> int:
        return sum(c.total for c in self.counts.values())

    @property
    def all_pages(self) -> frozenset[int]:
        return frozenset(range(self.num_pages))


@dataclass(frozen=True)
class ChainVerdict:
    www: bool
    args: bool
    syscall: bool

    @property
    def e2e(self) -> bool:
        return self.www and self.args and self.syscall

    def as_dict(self) -> dict[str, bool]:
        return {
            "www": self.www,
            "args": self.args,
            "syscall": self.syscall,
            "e2e": self.e2e,
        }


def _page_spans(start: int, size: int, page_size: int) -> list[tuple[int, int]]:
    """(page, bytes-on-page) pairs covering [start, start+size)."""
    spans = []
    first = start // page_size
    last = (start + size - 1) // page_size
    for page in range(first, last + 1):
        lo = max(start, page * page_size)
        hi = min(start + size, (page + 1) * page_size)
        spans.append((page, hi - lo))
    return spans


def build_page_index(model: ProgramModel, layout: DisjointLayout) -> PageGadgetIndex:
    """Project function gadget profiles onto layout pages."""
    acc: dict[int, dict[str, int]] = {}
    flags: dict[int, set[str]] = {}
    for fid, fn in model.functions.items():
        place = layout.placements[fid]
        start = (
            layout.section_start_page(place.section) * layout.page_size + place.offset
        )
        spans = _page_spans(start, fn.size, layout.page_size)
        for cls in GADGET_CLASSES:
            shares = _split_count(getattr(fn.gadgets, cls), fn.size, spans)
            for (page, _), share in zip(spans, shares):
                if share:
                    acc.setdefault(page, dict.fromkeys(GADGET_CLASSES, 0))
                    acc[page][cls] += share
        for page, _ in spans:
            if fn.gadgets.chain:
                flags.setdefault(page, set()).update(fn.gadgets.chain)
    counts = {page: PageCounts(**vals) for page, vals in acc.items()}
    return PageGadgetIndex(
        counts=counts,
        flags={page: frozenset(v) for page, v in flags.items()},
        num_pages=layout.total_pages,
    )


def _split_count(count: int, size: int, spans: list[tuple[int, int]]) -> list[int]:
    """Byte-proportional integer split; rounding remainder goes to span 0."""
    if len(spans) == 1:
        return [count]
    shares = [0] * len(spans)
    for i in range(1, len(spans)):
        shares[i] = count * spans[i][1] // size
    shares[0] = count - sum(shares[1:])
    return shares


def total_gadgets(index: PageGadgetIndex) -> int:
    return index.total


def gadgets_in(index: PageGadgetIndex, pages) -> int:
    return sum(index.counts[p].total for p in pages if p in index.counts)


def reduction_for(index: PageGadgetIndex, pages) -> Fraction:
    """Percent of total gadgets outside the given available-page set."""
    total = index.total
    if total == 0:
        raise ZeroTotal("program has no gadgets; reduction is undefined")
    return Fraction(total - gadgets_in(index, pages), total) * 100


def render_pct(value: Fraction) -> str:
    """Exact one-decimal rendering, rounding halves up."""
    tenths = value * 10
    whole = tenths.numerator // tenths.denominator
    if (tenths - whole) * 2 >= 1:
        whole += 1
    return f"{whole // 10}.{whole % 10}"


def chain_available(index: PageGadgetIndex, pages) -> ChainVerdict:
    present: set[str] = set()
    for page in pages:
        present |= index.flags.get(page, frozenset())
    return ChainVerdict("www" in present, "args" in present, "syscall" in present)


@dataclass(frozen=True)
class ApStats:
    pages: tuple[int, ...]
    occurrences: int
    gadgets: int
    reduction: Fraction
    chain: ChainVerdict


@dataclass(frozen=True)
class ClassStats:
    total: int
    min: Fraction
    max: Fraction
    avg: Fraction


@dataclass(frozen=True)
class ReductionReport:
    total: int
    unique_set_count: int
    dynamic_execution_count: int
    min: Fraction
    max: Fraction
    avg: Fraction
    per_ap: list[ApStats]
    per_class: dict[str, ClassStats | None]
    baseline_chain: ChainVerdict
    any_dynamic_e2e: bool


def summarize(index: PageGadgetIndex, snapshots) -> ReductionReport:
    """Score every distinct available-page set appearing in a log.

    ``snapshots`` is an iterable of page collections (one per API call).
    Sets are deduplicated by equality; min/max/avg range over distinct sets
    while the dynamic count keeps the raw record total.
    """
    raw = [frozenset(s) for s in snapshots]
    if not raw:
        raise ValueError("empty log: nothing to summarize")
    distinct: list[frozenset[int]] = []
    occurrences: dict[frozenset[int], int] = {}
    for ap in raw:
        if ap not in occurrences:
            distinct.append(ap)
            occurrences[ap] = 0
        occurrences[ap] += 1

    total = index.total
    if total == 0:
        raise ZeroTotal("program has no gadgets; reduction is undefined")

    per_ap = []
    for ap in distinct:
        per_ap.append(
            ApStats(
                pages=tuple(sorted(ap)),
                occurrences=occurrences[ap],
                gadgets=gadgets_in(index, ap),
                reduction=reduction_for(index, ap),
                chain=chain_available(index, ap),
            )
        )
    reductions = [s.reduction for s in per_ap]

    per_class: dict[str, ClassStats | None] = {}
    for cls in GADGET_CLASSES:
        cls_total = index.class_total(cls)
        if cls_total == 0:
            per_class[cls] = None
            continue
        vals = []
        for ap in distinct:
            in_ap = sum(index.counts[p].get(cls) for p in ap if p in index.counts)
            vals.append(Fraction(cls_total - in_ap, cls_total) * 100)
        per_class[cls] = ClassStats(
            cls_total, min(vals), max(vals), sum(vals) / len(vals)
        )

    return ReductionReport(
        total=total,
        unique_set_count=len(distinct),
        dynamic_execution_count=len(raw),
        min=min(reductions),
        max=max(reductions),
        avg=sum(reductions) / len(reductions),
        per_ap=per_ap,
        per_class=per_class,
        baseline_chain=chain_available(index, index.all_pages),
        any_dynamic_e2e=any(s.chain.e2e for s in per_ap),
    )


@dataclass(frozen=True)
class ChainStudy:
    baseline: ChainVerdict
    any_dynamic_e2e: bool
    offending: list[tuple[int, ...]]


def chain_break_study(index: PageGadgetIndex, snapshots) -> ChainStudy:
    """Does any logged available-page set expose the full chain?

    The interesting outcome mirrors production runs: the whole binary has
    all three components, yet no dynamically available set ever does.
    """
    seen: list[frozenset[int]] = []
    for s in snapshots:
        ap = frozenset(s)
        if ap not in seen:
            seen.append(ap)
    offending = [
        tuple(sorted(ap)) for ap in seen if chain_available(index, ap).e2e
    ]
    return ChainStudy(
        baseline=chain_available(index, index.all_pages),
        any_dynamic_e2e=bool(offending),
        offending=offending,
    )


# -- report document ---------------------------------------------------------


def report_to_doc(report: ReductionReport) -> dict:
    def cls_doc(stats: ClassStats | None):
        if stats is None:
            return None
        return {
            "total": stats.total,
            "min": render_pct(stats.min),
            "max": render_pct(stats.max),
            "avg": render_pct(stats.avg),
        }

    return {
        "total_gadgets": report.total,
        "unique_set_count": report.unique_set_count,
        "dynamic_execution_count": report.dynamic_execution_count,
        "reduction": {
            "min": render_pct(report.min),
            "max": render_pct(report.max),
            "avg": render_pct(report.avg),
        },
        "per_class": {cls: cls_doc(report.per_class[cls]) for cls in GADGET_CLASSES},
        "available_page_sets": [
            {
                "pages": list(s.pages),
                "occurrences": s.occurrences,
                "gadgets": s.gadgets,
                "reduction": render_pct(s.reduction),
                "chain": s.chain.as_dict(),
            }
            for s in report.per_ap
        ],
        "chain": {
            "baseline": report.baseline_chain.as_dict(),
            "any_dynamic_e2e": report.any_dynamic_e2e,
        },
    }


def zero_total_doc(index: PageGadgetIndex, snapshots) -> dict:
    """Report shape for gadget-free programs: reduction is not applicable."""
    sets = [frozenset(s) for s in snapshots]
    study = chain_break_study(index, sets)
    return {
        "total_gadgets": 0,
        "unique_set_count": len(set(sets)),
        "dynamic_execution_count": len(sets),
        "reduction": None,
        "per_class": {cls: None for cls in GADGET_CLASSES},
        "available_page_sets": [],
        "chain": {
            "baseline": study.baseline.as_dict(),
            "any_dynamic_e2e": study.any_dynamic_e2e,
        },
    }


def render_table(doc: dict) -> str:
    """Human-readable report table (Min/Max/Avg plus chain columns)."""
    lines = []
    lines.append(f"Total gadgets: {doc['total_gadgets']}")
    lines.append(
        f"Available-page sets: {doc['unique_set_count']} unique, "
        f"{doc['dynamic_execution_count']} dynamic"
    )
    red = doc["reduction"]
    lines.append("")
    lines.append("Gadget reduction (%)    Min     Max     Avg")
    if red is None:
        lines.append("  total                 n/a     n/a     n/a")
    else:
        lines.append(
            f"  total               {red['min']:>7} {red['max']:>7} {red['avg']:>7}"
        )
    for cls in GADGET_CLASSES:
        stats = doc["per_class"][cls]
        if stats is None:
            lines.append(f"  {cls:<19}     n/a     n/a     n/a")
        else:
            lines.append(
                f"  {cls:<19} {stats['min']:>7} {stats['max']:>7} {stats['avg']:>7}"
            )
    chain = doc["chain"]

    def mark(flag: bool) -> str:
        return "yes" if flag else "no"

    b = chain["baseline"]
    lines.append("")
    lines.append("Chain availability      W-W-W   Args    Syscall E2E")
    lines.append(
        f"  baseline (all pages) {mark(b['www']):>6} {mark(b['args']):>7} "
        f"{mark(b['syscall']):>7} {mark(b['e2e']):>4}"
    )
    lines.append(f"  any dynamic set: E2E {mark(chain['any_dynamic_e2e']):>6}")
    return "\n".join(lines) + "\n"
