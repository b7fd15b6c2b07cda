"""Declarative program model: functions, call sites, loops, gadget annotations.

The model file is a JSON document with top-level keys ``functions``,
``call_sites``, ``loops`` and ``entry``.  Loading validates referential
integrity and all structural invariants before any analysis runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DeckforgeError

CHAIN_COMPONENTS = ("www", "args", "syscall")


class ParseError(DeckforgeError):
    """The document is not well-formed (bad JSON, wrong types, unknown keys)."""


class ValidationError(DeckforgeError):
    """The document parsed but violates a model invariant."""


@dataclass(frozen=True)
class GadgetProfile:
    rop: int = 0
    jop: int = 0
    cop: int = 0
    special: int = 0
    chain: frozenset[str] = frozenset()

    @property
    def total(self) -> int:
        return self.rop + self.jop + self.cop + self.special


@dataclass(frozen=True)
class FunctionDef:
    id: int
    name: str
    size: int
    address_taken: bool = False
    gadgets: GadgetProfile = field(default_factory=GadgetProfile)


@dataclass(frozen=True)
class CallSite:
    """A direct call (``callee`` set) or indirect call (``targets`` set)."""

    id: int
    caller: int
    callee: int | None = None
    targets: tuple[int, ...] = ()
    loop: int | None = None

    @property
    def is_direct(self) -> bool:
        return self.callee is not None

    @property
    def is_indirect(self) -> bool:
        return self.callee is None


@dataclass(frozen=True)
class LoopDef:
    id: int
    function: int
    parent: int | None = None
    sites: tuple[int, ...] = ()


@dataclass
class ProgramModel:
    """Validated whole-program view.  Immutable after load."""

    functions: dict[int, FunctionDef]
    call_sites: dict[int, CallSite]
    loops: dict[int, LoopDef]
    entry: int

    def outermost_loops(self, function_id: int) -> list[LoopDef]:
        return [
            lp
            for lp in self.loops.values()
            if lp.function == function_id and lp.parent is None
        ]

    def child_loops(self, loop_id: int) -> list[LoopDef]:
        return [lp for lp in self.loops.values() if lp.parent == loop_id]


def direct_callgraph(model: ProgramModel) -> dict[int, set[int]]:
    """Adjacency map of the direct-call edges.  Indirect sites contribute none."""
    graph: dict[int, set[int]] = {}
    for site in model.call_sites.values():
        if site.is_direct:
            graph.setdefault(site.caller, set()).add(site.callee)
    return graph


def load_model(document: str | bytes | dict) -> ProgramModel:
    """Parse and validate a program-model document (JSON text or mapping).

    Raises ParseError for malformed documents and ValidationError when a
    model invariant is violated; both name the offending entity.
    """
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ParseError("top-level value must be an object")
    _check_keys(doc, {"functions", "call_sites", "loops", "entry"}, set(), "document")

    functions = _parse_functions(doc["functions"])
    call_sites = _parse_call_sites(doc["call_sites"])
    loops = _parse_loops(doc["loops"])
    entry = _int_field(doc, "entry", "document")

    model = ProgramModel(functions, call_sites, loops, entry)
    _validate(model)
    return model


def load_model_file(path) -> ProgramModel:
    with open(path, "r", encoding="utf-8") as fh:
        return load_model(fh.read())


# -- parsing ---------------------------------------------------------------


def _check_keys(obj: dict, required: set[str], optional: set[str], what: str) -> None:
    keys = set(obj)
    missing = required - keys
    if missing:
        raise ParseError(f"{what}: missing key(s) {sorted(missing)}")
    unknown = keys - required - optional
    if unknown:
        raise ParseError(f"{what}: unknown key(s) {sorted(unknown)}")


def _int_field(obj: dict, key: str, what: str, minimum: int = 0) -> int:
    value = obj[key]
    if type(value) is not int:
        raise ParseError(f"{what}: {key!r} must be an integer")
    if value < minimum:
        raise ValidationError(f"{what}: {key!r} must be >= {minimum}, got {value}")
    return value


def _parse_gadgets(obj, what: str) -> GadgetProfile:
    if not isinstance(obj, dict):
        raise ParseError(f"{what}: 'gadgets' must be an object")
    _check_keys(obj, set(), {"rop", "jop", "cop", "special", "chain"}, what)
    counts = {}
    for key in ("rop", "jop", "cop", "special"):
        counts[key] = _int_field(obj, key, what) if key in obj else 0
    chain = obj.get("chain", [])
    if not isinstance(chain, list):
        raise ParseError(f"{what}: 'chain' must be a list")
    for tag in chain:
        if tag not in CHAIN_COMPONENTS:
            raise ParseError(f"{what}: unknown chain component {tag!r}")
    return GadgetProfile(chain=frozenset(chain), **counts)


def _parse_functions(items) -> dict[int, FunctionDef]:
    if not isinstance(items, list):
        raise ParseError("'functions' must be a list")
    functions: dict[int, FunctionDef] = {}
    for obj in items:
        if not isinstance(obj, dict):
            raise ParseError("function entries must be objects")
        what = f"function {obj.get('id', '?')}"
        _check_keys(obj, {"id", "name", "size"}, {"address_taken", "gadgets"}, what)
        fid = _int_field(obj, "id", what)
        what = f"function {fid}"
        if fid in functions:
            raise ValidationError(f"duplicate function id {fid}")
        name = obj["name"]
        if not isinstance(name, str) or not name:
            raise ParseError(f"{what}: 'name' must be a non-empty string")
        size = _int_field(obj, "size", what, minimum=1)
        address_taken = obj.get("address_taken", False)
        if not isinstance(address_taken, bool):
            raise ParseError(f"{what}: 'address_taken' must be a boolean")
        gadgets = _parse_gadgets(obj.get("gadgets", {}), what)
        functions[fid] = FunctionDef(fid, name, size, address_taken, gadgets)
    return functions


def _parse_call_sites(items) -> dict[int, CallSite]:
    if not isinstance(items, list):
        raise ParseError("'call_sites' must be a list")
    sites: dict[int, CallSite] = {}
    for obj in items:
        if not isinstance(obj, dict):
            raise ParseError("call-site entries must be objects")
        what = f"call site {obj.get('id', '?')}"
        _check_keys(obj, {"id", "caller"}, {"callee", "targets", "loop"}, what)
        sid = _int_field(obj, "id", what)
        what = f"call site {sid}"
        if sid in sites:
            raise ValidationError(f"duplicate call-site id {sid}")
        caller = _int_field(obj, "caller", what)
        has_callee = obj.get("callee") is not None
        has_targets = obj.get("targets") is not None
        if has_callee == has_targets:
            raise ParseError(f"{what}: exactly one of 'callee' or 'targets' required")
        callee = None
        targets: tuple[int, ...] = ()
        if has_callee:
            callee = _int_field(obj, "callee", what)
        else:
            raw = obj["targets"]
            if not isinstance(raw, list) or not raw:
                raise ParseError(f"{what}: 'targets' must be a non-empty list")
            for t in raw:
                if type(t) is not int or t < 0:
                    raise ParseError(f"{what}: targets must be non-negative integers")
            targets = tuple(sorted(set(raw)))
        loop = None
        if obj.get("loop") is not None:
            loop = _int_field(obj, "loop", what)
        sites[sid] = CallSite(sid, caller, callee, targets, loop)
    return sites


def _parse_loops(items) -> dict[int, LoopDef]:
    if not isinstance(items, list):
        raise ParseError("'loops' must be a list")
    loops: dict[int, LoopDef] = {}
    for obj in items:
        if not isinstance(obj, dict):
            raise ParseError("loop entries must be objects")
        what = f"loop {obj.get('id', '?')}"
        _check_keys(obj, {"id", "function"}, {"parent", "sites"}, what)
        lid = _int_field(obj, "id", what)
        what = f"loop {lid}"
        if lid in loops:
            raise ValidationError(f"duplicate loop id {lid}")
        function = _int_field(obj, "function", what)
        parent = None
        if obj.get("parent") is not None:
            parent = _int_field(obj, "parent", what)
        raw_sites = obj.get("sites", [])
        if not isinstance(raw_sites, list):
            raise ParseError(f"{what}: 'sites' must be a list")
        for s in raw_sites:
            if type(s) is not int or s < 0:
                raise ParseError(f"{what}: sites must be non-negative integers")
        loops[lid] = LoopDef(lid, function, parent, tuple(sorted(set(raw_sites))))
    return loops


# -- validation ------------------------------------------------------------


def _validate(model: ProgramModel) -> None:
    functions, sites, loops = model.functions, model.call_sites, model.loops

    if model.entry not in functions:
        raise ValidationError(f"entry function {model.entry} does not exist")

    for site in sites.values():
        what = f"call site {site.id}"
        if site.caller not in functions:
            raise ValidationError(f"{what}: caller {site.caller} does not exist")
        if site.is_direct:
            if site.callee not in functions:
                raise ValidationError(f"{what}: callee {site.callee} does not exist")
        else:
            for t in site.targets:
                if t not in functions:
                    raise ValidationError(f"{what}: target {t} does not exist")
                if not functions[t].address_taken:
                    raise ValidationError(
                        f"{what}: target {functions[t].name!r} ({t}) is not address-taken"
                    )
        if site.loop is not None:
            if site.loop not in loops:
                raise ValidationError(f"{what}: loop {site.loop} does not exist")
            if loops[site.loop].function != site.caller:
                raise ValidationError(
                    f"{what}: enclosing loop {site.loop} belongs to another function"
                )

    for loop in loops.values():
        what = f"loop {loop.id}"
        if loop.function not in functions:
            raise ValidationError(f"{what}: function {loop.function} does not exist")
        if loop.parent is not None:
            if loop.parent not in loops:
                raise ValidationError(f"{what}: parent loop {loop.parent} does not exist")
            if loops[loop.parent].function != loop.function:
                raise ValidationError(f"{what}: parent loop is in another function")
        for sid in loop.sites:
            if sid not in sites:
                raise ValidationError(f"{what}: contained site {sid} does not exist")
            if sites[sid].caller != loop.function:
                raise ValidationError(
                    f"{what}: contained site {sid} belongs to another function"
                )
            if sites[sid].loop != loop.id:
                raise ValidationError(
                    f"{what}: site {sid} is listed but names loop {sites[sid].loop}"
                )

    # the two encodings of loop membership must agree in both directions
    for site in sites.values():
        if site.loop is not None and site.id not in loops[site.loop].sites:
            raise ValidationError(
                f"call site {site.id}: loop {site.loop} does not list it"
            )

    # nesting must form a forest
    for loop in loops.values():
        seen = {loop.id}
        cur = loop.parent
        while cur is not None:
            if cur in seen:
                raise ValidationError(f"loop {loop.id}: nesting cycle via loop {cur}")
            seen.add(cur)
            cur = loops[cur].parent
