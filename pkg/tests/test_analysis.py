import random

from deckforge.analysis import (
    DeckKind,
    RUNTIME_TARGET,
    compute_encompassed,
    plan_instrumentation,
    plan_to_doc,
)
from deckforge.model import load_model

from conftest import random_model_doc
from replay_oracle import derive_tables


def _names(bundle, fids):
    return {bundle.model.functions[f].name for f in fids}


def test_xz_encompassed_golden(xz):
    enc = compute_encompassed(xz.model)
    assert _names(xz, enc.encompassed) == {"msg_filters_to_str", "uint32_to_optstr"}
    assert _names(xz, enc.non_encompassed) == {
        "main",
        "msg_filters_show",
        "print_info_adv",
    }


def test_xz_plan_points_golden(xz):
    names = {fid: fn.name for fid, fn in xz.model.functions.items()}
    described = set()
    for p in xz.plan.points:
        if p.kind is DeckKind.LOOP:
            described.add(("loop", p.anchor))
        else:
            site = xz.model.call_sites[p.anchor]
            described.add(
                (p.kind.value, names[site.caller], names[site.callee])
            )
    assert described == {
        ("single", "main", "msg_filters_show"),
        ("single", "main", "print_info_adv"),
        ("loop", 0),
        ("reachable", "msg_filters_show", "msg_filters_to_str"),
    }
    assert len(xz.plan.points) == 4
    # the encompassed msg_filters_to_str -> uint32_to_optstr edge gets nothing
    anchored_sites = {p.anchor for p in xz.plan.points if p.kind is not DeckKind.LOOP}
    assert 4 not in anchored_sites


def test_no_loops_means_no_encompassed():
    model = load_model(
        {
            "entry": 0,
            "functions": [
                {"id": 0, "name": "main", "size": 8},
                {"id": 1, "name": "a", "size": 8},
            ],
            "call_sites": [{"id": 0, "caller": 0, "callee": 1}],
            "loops": [],
        }
    )
    assert compute_encompassed(model).encompassed == frozenset()


def test_single_function_empty_plan():
    model = load_model(
        {
            "entry": 0,
            "functions": [{"id": 0, "name": "main", "size": 8}],
            "call_sites": [],
            "loops": [],
        }
    )
    plan = plan_instrumentation(model)
    assert plan.points == ()
    assert plan.loop_function_sets == {}


def test_expanded_xz_loop_and_reachable_sets(xz_expanded):
    b = xz_expanded
    (loop_id,) = b.plan.loop_function_sets
    assert _names(b, b.plan.loop_function_sets[loop_id]) == {
        "parse_block_header",
        "msg_filters_to_str",
        "uint32_to_optstr",
    }
    mfts = next(
        fid for fid, fn in b.model.functions.items() if fn.name == "msg_filters_to_str"
    )
    assert _names(b, b.plan.reachable_closure[mfts]) == {
        "msg_filters_to_str",
        "uint32_to_optstr",
    }


def test_indirect_sites_always_instrumented():
    model = load_model(
        {
            "entry": 0,
            "functions": [
                {"id": 0, "name": "main", "size": 8},
                {"id": 1, "name": "enc", "size": 8},
                {"id": 2, "name": "cb", "size": 8, "address_taken": True},
            ],
            "call_sites": [
                {"id": 0, "caller": 0, "callee": 1, "loop": 0},
                {"id": 1, "caller": 1, "targets": [2]},  # inside encompassed fn
            ],
            "loops": [{"id": 0, "function": 0, "sites": [0]}],
        }
    )
    plan = plan_instrumentation(model)
    indirect = [p for p in plan.points if p.kind is DeckKind.INDIRECT]
    assert [(p.anchor, p.deck_id) for p in indirect] == [(1, RUNTIME_TARGET)]


def test_encompassed_matches_worklist_oracle():
    rng = random.Random(11)
    for _ in range(100):
        doc = random_model_doc(rng, max_functions=12)
        model = load_model(doc)
        expected, _, _, _ = derive_tables(doc)
        enc = compute_encompassed(model)
        assert set(enc.encompassed) == expected
        assert set(enc.non_encompassed) == set(model.functions) - expected


def test_plan_invariants_on_random_models():
    rng = random.Random(13)
    for _ in range(100):
        doc = random_model_doc(rng)
        model = load_model(doc)
        plan = plan_instrumentation(model)
        enc = plan.encompassed_sets

        # partition
        assert enc.encompassed | enc.non_encompassed == set(model.functions)
        assert not enc.encompassed & enc.non_encompassed
        # closure under direct calls
        for site in model.call_sites.values():
            if site.is_direct and site.caller in enc.encompassed:
                assert site.callee in enc.encompassed
        # anchor legality
        for p in plan.points:
            if p.kind is DeckKind.LOOP:
                loop = model.loops[p.anchor]
                assert loop.parent is None
                assert loop.function in enc.non_encompassed
            elif p.kind is DeckKind.INDIRECT:
                assert model.call_sites[p.anchor].is_indirect
            else:
                site = model.call_sites[p.anchor]
                assert site.is_direct
                assert site.caller in enc.non_encompassed
                assert site.loop is None
                expected = (
                    DeckKind.REACHABLE
                    if site.callee in enc.encompassed
                    else DeckKind.SINGLE
                )
                assert p.kind is expected
        # every indirect site is anchored
        anchored = {p.anchor for p in plan.points if p.kind is DeckKind.INDIRECT}
        assert anchored == {
            s.id for s in model.call_sites.values() if s.is_indirect
        }


def test_plan_documents_deterministic(xz_expanded):
    doc = xz_expanded.doc
    one = plan_to_doc(plan_instrumentation(load_model(doc)))
    two = plan_to_doc(plan_instrumentation(load_model(doc)))
    assert one == two
    import json

    assert json.dumps(one, sort_keys=True) == json.dumps(two, sort_keys=True)
