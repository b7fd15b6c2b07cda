"""Shared fixtures: built-in example programs plus random model/trace builders."""

import random

import pytest

from deckforge import fixtures as builtin
from deckforge.analysis import plan_instrumentation
from deckforge.layout import build_layout
from deckforge.model import load_model
from deckforge.simulator import TraceEvent


class Bundle:
    """A model with its plan and layout, ready for simulation."""

    def __init__(self, model_doc, traces=None, page_size=4096):
        self.doc = model_doc
        self.traces = traces or {}
        self.model = load_model(model_doc)
        self.plan = plan_instrumentation(self.model)
        self.deck_sets, self.layout = build_layout(self.model, self.plan, page_size)

    def pages(self, fid):
        return self.layout.function_pages(fid, self.model.functions[fid].size)


def bundle_for(name, **kwargs):
    doc, traces = builtin.FIXTURES[name](**kwargs)
    return Bundle(doc, traces)


@pytest.fixture
def xz():
    return bundle_for("xz")


@pytest.fixture
def xz_expanded():
    return bundle_for("xz-expanded")


@pytest.fixture
def date():
    return bundle_for("date")


@pytest.fixture
def chain():
    return bundle_for("chain")


@pytest.fixture
def sc_chain():
    return bundle_for("sc-chain")


# -- random builders ---------------------------------------------------------


def random_model_doc(rng: random.Random, max_functions=15, p_indirect=0.25):
    """A structurally valid random model document.

    The entry function is never a callee or an indirect target: the scheme
    assumes a non-encompassed entry (nothing admits the entry's own calls
    except its instrumentation, so an encompassed entry could fault).
    """
    n = rng.randint(1, max_functions)
    functions = []
    for fid in range(n):
        functions.append(
            {
                "id": fid,
                "name": f"fn{fid}",
                "size": rng.choice([64, 256, 512, 1000, 4000, 5000, 9000]),
                "address_taken": fid > 0 and rng.random() < 0.3,
                "gadgets": {
                    "rop": rng.randint(0, 40),
                    "jop": rng.randint(0, 20),
                    "cop": rng.randint(0, 15),
                    "special": rng.randint(0, 5),
                    "chain": [
                        c for c in ("www", "args", "syscall") if rng.random() < 0.2
                    ],
                },
            }
        )

    loops = []
    loops_of = {fid: [] for fid in range(n)}
    next_loop = 0
    for fid in range(n):
        if rng.random() < 0.6:
            for _ in range(rng.randint(1, 2)):
                outer = {"id": next_loop, "function": fid, "sites": []}
                loops.append(outer)
                loops_of[fid].append(outer)
                next_loop += 1
                if rng.random() < 0.4:
                    inner = {
                        "id": next_loop,
                        "function": fid,
                        "parent": outer["id"],
                        "sites": [],
                    }
                    loops.append(inner)
                    loops_of[fid].append(inner)
                    next_loop += 1

    taken = [f["id"] for f in functions if f["address_taken"]]
    sites = []
    for sid in range(rng.randint(0, 3 * n) if n > 1 else 0):
        caller = rng.randrange(n)
        site = {"id": sid, "caller": caller}
        if taken and rng.random() < p_indirect:
            site["targets"] = sorted(
                rng.sample(taken, rng.randint(1, min(3, len(taken))))
            )
        else:
            site["callee"] = rng.randrange(1, n)
        candidates = loops_of[caller]
        if candidates and rng.random() < 0.5:
            loop = rng.choice(candidates)
            site["loop"] = loop["id"]
            loop["sites"].append(sid)
        sites.append(site)

    return {"entry": 0, "functions": functions, "call_sites": sites, "loops": loops}


def random_trace(rng: random.Random, model, max_events=200, max_depth=6):
    """A well-nested trace: calls fire only at their lexical loop position."""
    events = []
    budget = [max_events]

    sites_at = {}
    for s in model.call_sites.values():
        sites_at.setdefault((s.caller, s.loop), []).append(s)
    loops_at = {}
    for lp in model.loops.values():
        loops_at.setdefault((lp.function, lp.parent), []).append(lp)

    def at_position(fid, loop_id, depth):
        for _ in range(rng.randint(0, 3)):
            if budget[0] <= 0:
                return
            choices = []
            sites = sites_at.get((fid, loop_id), [])
            if sites and depth < max_depth:
                choices.append("call")
            loops = loops_at.get((fid, loop_id), [])
            if loops:
                choices.append("loop")
            if not choices:
                return
            if rng.choice(choices) == "call":
                site = rng.choice(sites)
                if site.is_direct:
                    events.append(TraceEvent("call", site=site.id))
                    callee = site.callee
                else:
                    callee = rng.choice(site.targets)
                    events.append(TraceEvent("icall", site=site.id, target=callee))
                budget[0] -= 2
                at_position(callee, None, depth + 1)
                events.append(TraceEvent("ret"))
            else:
                loop = rng.choice(loops)
                events.append(TraceEvent("loop_enter", loop=loop.id))
                budget[0] -= 2
                for _ in range(rng.randint(1, 3)):
                    at_position(fid, loop.id, depth)
                events.append(TraceEvent("loop_exit", loop=loop.id))

    at_position(model.entry, None, 0)
    return events
