"""Built-in example programs and traces, usable from tests and the CLI.

Each fixture returns a model document plus named trace files.  They cover
the classic shapes: a compression tool with a loop-reached call chain, a
date utility with one optional callee, a server whose chain components
live in different decks, and stress shapes for the IDC and SC behaviors.
"""

from __future__ import annotations


def _fn(fid, name, size=512, address_taken=False, **gadgets):
    out = {"id": fid, "name": name, "size": size, "address_taken": address_taken}
    if gadgets:
        chain = gadgets.pop("chain", None)
        g = dict(gadgets)
        if chain:
            g["chain"] = chain
        out["gadgets"] = g
    return out


def xz() -> tuple[dict, dict[str, str]]:
    """Compression-tool callgraph: one loop-enclosed call makes the string
    formatter and its helper encompassed."""
    model = {
        "entry": 0,
        "functions": [
            _fn(0, "main", rop=8, jop=2),
            _fn(1, "print_info_adv", rop=6, jop=1, cop=1),
            _fn(2, "msg_filters_show", rop=4),
            _fn(3, "msg_filters_to_str", rop=10, special=1),
            _fn(4, "uint32_to_optstr", rop=3, cop=2),
        ],
        "call_sites": [
            {"id": 0, "caller": 0, "callee": 2},
            {"id": 1, "caller": 0, "callee": 1},
            {"id": 2, "caller": 2, "callee": 3},
            {"id": 3, "caller": 1, "callee": 3, "loop": 0},
            {"id": 4, "caller": 3, "callee": 4},
        ],
        "loops": [{"id": 0, "function": 1, "sites": [3]}],
    }
    trace = "\n".join(
        [
            "call 0",  # main -> msg_filters_show
            "call 2",  # -> msg_filters_to_str (reachable deck)
            "call 4",  # -> uint32_to_optstr (no instrumentation)
            "ret",
            "ret",
            "ret",
            "call 1",  # main -> print_info_adv
            "loop_enter 0",
            "call 3",
            "call 4",
            "ret",
            "ret",
            "call 3",
            "call 4",
            "ret",
            "ret",
            "loop_exit 0",
            "ret",
            "",
        ]
    )
    return model, {"filters": trace}


def xz_expanded() -> tuple[dict, dict[str, str]]:
    """The same callgraph with a block-header parser between the loop and
    the string formatter; the loop deck and reachable deck now overlap."""
    model = {
        "entry": 0,
        "functions": [
            _fn(0, "main", rop=8, jop=2),
            _fn(1, "print_info_adv", rop=6, jop=1, cop=1),
            _fn(2, "msg_filters_show", rop=4),
            _fn(3, "parse_block_header", rop=5, jop=2),
            _fn(4, "msg_filters_to_str", rop=10, special=1),
            _fn(5, "uint32_to_optstr", rop=3, cop=2),
        ],
        "call_sites": [
            {"id": 0, "caller": 0, "callee": 2},
            {"id": 1, "caller": 0, "callee": 1},
            {"id": 2, "caller": 2, "callee": 4},
            {"id": 3, "caller": 1, "callee": 3, "loop": 0},
            {"id": 4, "caller": 3, "callee": 4},
            {"id": 5, "caller": 4, "callee": 5},
        ],
        "loops": [{"id": 0, "function": 1, "sites": [3]}],
    }
    trace = "\n".join(
        [
            "call 0",
            "call 2",
            "call 5",
            "ret",
            "ret",
            "ret",
            "call 1",
            "loop_enter 0",
            "call 3",
            "call 4",
            "call 5",
            "ret",
            "ret",
            "ret",
            "loop_exit 0",
            "ret",
            "",
        ]
    )
    return model, {"filters": trace}


def date() -> tuple[dict, dict[str, str]]:
    """Two-page utility: the batch converter is mapped only around its call."""
    model = {
        "entry": 0,
        "functions": [
            _fn(0, "main"),
            _fn(1, "batch_convert", rop=7, jop=3),
        ],
        "call_sites": [{"id": 0, "caller": 0, "callee": 1}],
        "loops": [],
    }
    return model, {"batch": "call 0\nret\n"}


def chain() -> tuple[dict, dict[str, str]]:
    """Server-like program whose shell-spawning chain components live in
    three different decks that are never mapped together."""
    model = {
        "entry": 0,
        "functions": [
            _fn(0, "main", special=2),
            _fn(1, "serve_static", rop=10, chain=["www"]),
            _fn(2, "proxy_pass", jop=10, chain=["args"]),
            _fn(3, "log_rotate", cop=10, chain=["syscall"]),
        ],
        "call_sites": [
            {"id": 0, "caller": 0, "callee": 1},
            {"id": 1, "caller": 0, "callee": 2},
            {"id": 2, "caller": 0, "callee": 3},
        ],
        "loops": [],
    }
    traces = {
        "requests": "call 0\nret\ncall 1\nret\n",
        "maintenance": "call 2\nret\n",
    }
    return model, traces


def idc_loop(iterations: int = 1000) -> tuple[dict, dict[str, str]]:
    """A single-target indirect call spinning inside an outermost loop."""
    model = {
        "entry": 0,
        "functions": [
            _fn(0, "main", rop=2),
            _fn(1, "handler", address_taken=True, rop=5),
        ],
        "call_sites": [{"id": 0, "caller": 0, "targets": [1], "loop": 0}],
        "loops": [{"id": 0, "function": 0, "sites": [0]}],
    }
    lines = ["loop_enter 0"]
    for _ in range(iterations):
        lines.append("icall 0 1")
        lines.append("ret")
    lines.append("loop_exit 0")
    lines.append("")
    return model, {"spin": "\n".join(lines)}


def sc_chain() -> tuple[dict, dict[str, str]]:
    """Three nested single decks on private pages, for the cleaning window."""
    model = {
        "entry": 0,
        "functions": [
            _fn(0, "main"),
            _fn(1, "stage_a", rop=1),
            _fn(2, "stage_b", rop=1),
            _fn(3, "stage_c", rop=1),
        ],
        "call_sites": [
            {"id": 0, "caller": 0, "callee": 1},
            {"id": 1, "caller": 1, "callee": 2},
            {"id": 2, "caller": 2, "callee": 3},
        ],
        "loops": [],
    }
    trace = "call 0\ncall 1\ncall 2\nret\nret\nret\n"
    return model, {"deep": trace}


FIXTURES = {
    "xz": xz,
    "xz-expanded": xz_expanded,
    "date": date,
    "chain": chain,
    "idc-loop": idc_loop,
    "sc-chain": sc_chain,
}
