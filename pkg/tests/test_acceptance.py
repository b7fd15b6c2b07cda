"""Acceptance suite: every criterion prints one pass/fail line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as the
criteria execute.
"""

import functools
import random
from decimal import Decimal, ROUND_HALF_UP
from fractions import Fraction

from deckforge.analysis import DeckKind, plan_instrumentation
from deckforge.layout import (
    assign_pages,
    build_layout,
    create_disjoint_sets,
    growth_report,
)
from deckforge.metrics import (
    build_page_index,
    chain_available,
    reduction_for,
    render_pct,
    summarize,
)
from deckforge.model import load_model
from deckforge.simulator import parse_trace, simulate

from conftest import Bundle, bundle_for, random_model_doc, random_trace
from replay_oracle import replay
from test_layout import check_partition_laws


def criterion(number, title):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"criterion {number:2d} [{title}]: FAIL")
                raise
            print(f"criterion {number:2d} [{title}]: PASS")

        return wrapper

    return decorate


@criterion(1, "xz golden analysis")
def test_c1_xz_golden_analysis():
    b = bundle_for("xz")
    names = {fid: fn.name for fid, fn in b.model.functions.items()}
    enc = {names[f] for f in b.plan.encompassed_sets.encompassed}
    assert enc == {"msg_filters_to_str", "uint32_to_optstr"}

    points = set()
    for p in b.plan.points:
        if p.kind is DeckKind.LOOP:
            points.add(("loop", "print_info_adv"))
        else:
            site = b.model.call_sites[p.anchor]
            points.add((p.kind.value, names[site.caller], names[site.callee]))
    assert points == {
        ("single", "main", "msg_filters_show"),
        ("single", "main", "print_info_adv"),
        ("loop", "print_info_adv"),
        ("reachable", "msg_filters_show", "msg_filters_to_str"),
    }
    assert len(b.plan.points) == 4


@criterion(2, "disjoint-set golden")
def test_c2_disjoint_set_golden():
    b = bundle_for("xz-expanded")
    names = {fid: fn.name for fid, fn in b.model.functions.items()}
    result = create_disjoint_sets([frozenset(ds.members) for ds in b.deck_sets])
    assert [frozenset(names[f] for f in s) for s in result] == [
        frozenset({"print_info_adv"}),
        frozenset({"msg_filters_show"}),
        frozenset({"parse_block_header"}),
        frozenset({"msg_filters_to_str", "uint32_to_optstr"}),
    ]


@criterion(3, "partition laws, 1000 randomized inputs")
def test_c3_partition_laws():
    rng = random.Random(301)
    for _ in range(1000):
        inputs = [
            frozenset(rng.sample(range(60), rng.randint(1, 12)))
            for _ in range(rng.randint(0, 50))
        ]
        outputs = create_disjoint_sets(inputs)
        check_partition_laws(inputs, outputs)


@criterion(4, "refcount/availability invariants, 1000 randomized traces")
def test_c4_refcount_availability_invariants():
    rng = random.Random(401)
    for i in range(1000):
        doc = random_model_doc(rng, max_functions=15)
        bundle = Bundle(doc)
        events = random_trace(rng, bundle.model, max_events=200)
        idc = rng.random() < 0.5
        sc = rng.random() < 0.5
        fn_pages = {fid: bundle.pages(fid) for fid in bundle.model.functions}

        # the oracle re-derives availability from refcounts at every step and
        # checks non-negativity, at-call availability, and final-state reset
        expected, problems = replay(doc, fn_pages, events, idc=idc, sc=sc)
        assert problems == [], f"iteration {i}: {problems[:3]}"

        records = simulate(
            bundle.model, bundle.plan, bundle.layout, events, idc=idc, sc=sc
        )
        assert [(r.api, r.arg, r.pages) for r in records] == expected
        assert set(records[-1].pages) == set(records[0].pages)


@criterion(5, "date golden simulation")
def test_c5_date_golden_simulation():
    b = bundle_for("date")
    records = simulate(
        b.model, b.plan, b.layout, parse_trace(b.traces["batch"])
    )
    a = tuple(sorted(b.pages(0)))
    ab = tuple(sorted(set(b.pages(0)) | set(b.pages(1))))
    assert [(r.api, r.pages) for r in records] == [
        ("deck_init", a),
        ("deck_single", ab),
        ("deck_single_end", a),
    ]


@criterion(6, "IDC behavior, 1000-iteration indirect loop")
def test_c6_idc_behavior():
    b = bundle_for("idc-loop", iterations=1000)
    events = parse_trace(b.traces["spin"])
    target_pages = set(b.pages(1))

    def run(idc):
        records = simulate(b.model, b.plan, b.layout, events, idc=idc)
        # every call happens between loop begin and loop end; the target's
        # pages must be available throughout that window
        inside = False
        for r in records:
            if r.api == "deck_loop_end":
                inside = False
            if inside:
                assert target_pages <= set(r.pages)
            if r.api == "deck_loop":
                inside = True
                assert target_pages <= set(r.pages)
        return sum(1 for r in records if r.api == "deck_indirect")

    assert run(idc=True) == 1
    assert run(idc=False) == 1000


@criterion(7, "SC window on a 3-deep single-deck chain")
def test_c7_sc_window():
    b = bundle_for("sc-chain")
    events = parse_trace(b.traces["deep"])
    chain_pages = {fid: set(b.pages(fid)) for fid in (1, 2, 3)}

    def max_live(sc):
        records = simulate(b.model, b.plan, b.layout, events, sc=sc)
        return max(
            sum(1 for fid in chain_pages if chain_pages[fid] <= set(r.pages))
            for r in records
        )

    assert max_live(sc=True) == 2
    assert max_live(sc=False) == 3


@criterion(8, "metrics oracle equivalence, 200 randomized instances")
def test_c8_metrics_oracle_equivalence():
    rng = random.Random(801)
    done = 0
    while done < 200:
        doc = random_model_doc(rng, max_functions=10)
        model = load_model(doc)
        plan = plan_instrumentation(model)
        _, layout = build_layout(model, plan)
        index = build_page_index(model, layout)
        if index.total == 0:
            continue
        done += 1
        pages = sorted(index.all_pages)
        snapshots = [
            tuple(sorted(rng.sample(pages, rng.randint(0, len(pages)))))
            for _ in range(rng.randint(1, 25))
        ]

        # brute-force recomputation straight from the page-count table
        total = sum(c.total for c in index.counts.values())
        per_ap = {}
        order = []
        for snap in snapshots:
            key = frozenset(snap)
            if key not in per_ap:
                t_ap = sum(
                    index.counts[p].total for p in key if p in index.counts
                )
                per_ap[key] = Fraction(total - t_ap, total) * 100
                order.append(key)
        expected_min = min(per_ap.values())
        expected_max = max(per_ap.values())
        expected_avg = sum(per_ap.values()) / len(per_ap)

        for key, expected in per_ap.items():
            assert reduction_for(index, key) == expected

        report = summarize(index, snapshots)
        assert report.min == expected_min
        assert report.max == expected_max
        assert report.avg == expected_avg
        assert report.unique_set_count == len(per_ap)
        assert report.dynamic_execution_count == len(snapshots)

        # one-decimal rendering agrees with decimal half-up arithmetic
        for value in (report.min, report.max, report.avg):
            dec = (
                Decimal(value.numerator) / Decimal(value.denominator)
            ).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
            assert render_pct(value) == str(dec)


@criterion(9, "chain breaking in miniature")
def test_c9_chain_breaking():
    b = bundle_for("chain")
    index = build_page_index(b.model, b.layout)
    assert chain_available(index, index.all_pages).e2e is True
    for text in b.traces.values():
        records = simulate(b.model, b.plan, b.layout, parse_trace(text))
        for r in records:
            assert chain_available(index, r.pages).e2e is False


@criterion(10, "growth monotonicity, 500 randomized models")
def test_c10_growth_monotonicity():
    rng = random.Random(1001)
    for _ in range(500):
        doc = random_model_doc(rng)
        model = load_model(doc)
        plan = plan_instrumentation(model)
        _, layout = build_layout(model, plan)
        g = growth_report(model, layout)
        assert g.worst_case_bytes >= g.custom_bytes >= g.baseline_bytes

    eight = load_model(
        {
            "entry": 0,
            "functions": [
                {"id": i, "name": f"fn{i}", "size": 512} for i in range(8)
            ],
            "call_sites": [],
            "loops": [],
        }
    )
    layout = assign_pages(eight, [frozenset(range(8))], 4096)
    g = growth_report(eight, layout)
    assert g.improvement == 8.0
    assert (g.baseline_bytes, g.custom_bytes, g.worst_case_bytes) == (
        4096,
        4096,
        32768,
    )
