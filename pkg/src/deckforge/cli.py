"""Command-line front end: analyze -> layout -> simulate -> report.

Every subcommand is a thin wrapper over the library and is deterministic:
identical inputs and flags produce byte-identical outputs.  Exit codes:
0 success, 1 analysis/simulation error, 2 usage or parse error.
"""

from __future__ import annotations

import functools
import json
import logging
import os
import sys
from pathlib import Path

import click

from . import analysis, fixtures, layout as layout_mod, metrics, simulator
from .errors import DeckforgeError
from .model import ParseError, load_model_file

log = logging.getLogger("deckforge")


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ParseError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except DeckforgeError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


model_option = click.option(
    "--model", "-m", "model_path", required=True,
    type=click.Path(exists=True, dir_okay=False), help="Program model file (JSON).",
)
out_dir_option = click.option(
    "--out-dir", "out_dir", type=click.Path(file_okay=False), default=None,
    help="Directory for output artifacts.",
)
page_size_option = click.option(
    "--page-size", default=layout_mod.DEFAULT_PAGE_SIZE, show_default=True,
    help="Page size in bytes (positive power of two).",
)
format_option = click.option(
    "--format", "fmt", type=click.Choice(["table", "structured"]),
    default="table", show_default=True, help="Output rendering.",
)
idc_option = click.option("--idc/--no-idc", default=True, show_default=True,
                          help="Indirect-deck caching.")
sc_option = click.option("--sc/--no-sc", default=True, show_default=True,
                         help="Stack cleaning.")
trace_option = click.option(
    "--trace", "traces", multiple=True, required=True,
    type=click.Path(exists=True, dir_okay=False), help="Trace file (repeatable).",
)


def _check_page_size(page_size: int) -> None:
    if page_size <= 0 or page_size & (page_size - 1):
        raise click.UsageError("--page-size must be a positive power of two")


@click.group()
def main() -> None:
    """Plan code-activation decks, lay out pages, replay traces, score gadgets."""
    level = os.environ.get("DECKFORGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


@main.command()
@model_option
@out_dir_option
@format_option
@_handle_errors
def analyze(model_path, out_dir, fmt) -> None:
    """Compute encompassed sets and deck points for a model."""
    model = load_model_file(model_path)
    plan = analysis.plan_instrumentation(model)
    doc = analysis.plan_to_doc(plan)
    if fmt == "structured":
        click.echo(_dump(doc), nl=False)
    else:
        names = {fid: fn.name for fid, fn in model.functions.items()}
        enc = " ".join(names[f] for f in doc["encompassed"]) or "(none)"
        non = " ".join(names[f] for f in doc["non_encompassed"]) or "(none)"
        click.echo(f"encompassed: {enc}")
        click.echo(f"non-encompassed: {non}")
        click.echo(f"deck points: {len(plan.points)}")
        for p in plan.points:
            if p.kind is analysis.DeckKind.LOOP:
                anchor, deck = f"loop {p.anchor}", f"loop {p.deck_id}"
            else:
                anchor = f"site {p.anchor}"
                deck = p.deck_id if isinstance(p.deck_id, str) else names[p.deck_id]
            click.echo(f"  {p.kind.value:<9} {anchor:<9} -> {deck}")
    if out_dir:
        _write(Path(out_dir) / "plan.json", _dump(doc))


@main.command("layout")
@model_option
@out_dir_option
@page_size_option
@click.option("--check", is_flag=True, help="Verify the partition laws.")
@_handle_errors
def layout_cmd(model_path, out_dir, page_size, check) -> None:
    """Build deck sets, disjoint sets and the page-aligned layout."""
    _check_page_size(page_size)
    model = load_model_file(model_path)
    plan = analysis.plan_instrumentation(model)
    deck_sets, layout = layout_mod.build_layout(model, plan, page_size)
    growth = layout_mod.growth_report(model, layout)

    if check:
        inputs = [frozenset(ds.members) for ds in deck_sets]
        if any(model.entry in s for s in inputs):
            inputs.append(frozenset({model.entry}))
        outputs = layout_mod.create_disjoint_sets(inputs)
        problems = layout_mod.verify_partition(inputs, outputs)
        if problems:
            for p in problems:
                click.echo(f"partition check failed: {p}", err=True)
            sys.exit(1)
        click.echo("partition laws hold")

    click.echo(
        f"{len(deck_sets)} deck sets -> {len(layout.disjoint_sets)} sections, "
        f"{layout.total_pages} pages"
    )
    click.echo(
        f"growth: baseline {growth.baseline_bytes} B, custom {growth.custom_bytes} B "
        f"({growth.growth:.2f}x), worst case {growth.worst_case_bytes} B "
        f"(improvement {growth.improvement:.2f}x)"
    )
    if out_dir:
        doc = layout_mod.layout_to_doc(model, layout)
        doc["growth"] = {
            "baseline_bytes": growth.baseline_bytes,
            "custom_bytes": growth.custom_bytes,
            "worst_case_bytes": growth.worst_case_bytes,
        }
        _write(Path(out_dir) / "layout.json", _dump(doc))
        _write(Path(out_dir) / "linker_script.txt", layout.linker_script)


def _simulate_one(model, plan, layout, trace_path: Path, idc: bool, sc: bool):
    events = simulator.parse_trace(trace_path.read_text(encoding="utf-8"))
    return simulator.simulate(model, plan, layout, events, idc=idc, sc=sc)


@main.command()
@model_option
@out_dir_option
@page_size_option
@trace_option
@idc_option
@sc_option
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None,
              help="Log file path (single trace only).")
@_handle_errors
def simulate(model_path, out_dir, page_size, traces, idc, sc, log_path) -> None:
    """Replay trace file(s) and write available-page logs."""
    _check_page_size(page_size)
    if log_path and len(traces) > 1:
        raise click.UsageError("--log is only valid with a single --trace")
    model = load_model_file(model_path)
    plan = analysis.plan_instrumentation(model)
    _, layout = layout_mod.build_layout(model, plan, page_size)
    base = Path(out_dir) if out_dir else Path(".")
    for trace in traces:
        trace_path = Path(trace)
        records = _simulate_one(model, plan, layout, trace_path, idc, sc)
        dest = Path(log_path) if log_path else base / f"{trace_path.stem}.log"
        _write(dest, simulator.render_log(records))
        click.echo(f"{dest}: {len(records)} records")


@main.command()
@model_option
@out_dir_option
@page_size_option
@format_option
@click.option("--layout", "layout_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Layout document (default: recompute from model).")
@click.option("--log", "log_paths", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Available-page log (repeatable; multiple logs are merged).")
@_handle_errors
def report(model_path, out_dir, page_size, fmt, layout_path, log_paths) -> None:
    """Score gadget reduction and chain availability over logs."""
    _check_page_size(page_size)
    model = load_model_file(model_path)
    if layout_path:
        doc = json.loads(Path(layout_path).read_text(encoding="utf-8"))
        layout = layout_mod.layout_from_doc(model, doc)
    else:
        plan = analysis.plan_instrumentation(model)
        _, layout = layout_mod.build_layout(model, plan, page_size)
    snapshots = []
    for path in log_paths:
        records = simulator.parse_log(Path(path).read_text(encoding="utf-8"))
        snapshots.extend(r.pages for r in records)
    index = metrics.build_page_index(model, layout)
    try:
        rep = metrics.summarize(index, snapshots)
        doc = metrics.report_to_doc(rep)
    except metrics.ZeroTotal:
        doc = metrics.zero_total_doc(index, snapshots)
    if fmt == "structured":
        click.echo(_dump(doc), nl=False)
    else:
        click.echo(metrics.render_table(doc), nl=False)
    if out_dir:
        _write(Path(out_dir) / "report.json", _dump(doc))


@main.command()
@model_option
@page_size_option
@trace_option
@idc_option
@sc_option
@format_option
@click.option("--out-dir", "out_dir", type=click.Path(file_okay=False), default=".",
              show_default=True, help="Directory for all pipeline artifacts.")
@_handle_errors
def pipeline(model_path, page_size, traces, idc, sc, fmt, out_dir) -> None:
    """Run analyze, layout, simulate and report in sequence."""
    _check_page_size(page_size)
    model = load_model_file(model_path)
    plan = analysis.plan_instrumentation(model)
    deck_sets, layout = layout_mod.build_layout(model, plan, page_size)
    growth = layout_mod.growth_report(model, layout)
    base = Path(out_dir)

    _write(base / "plan.json", _dump(analysis.plan_to_doc(plan)))
    layout_doc = layout_mod.layout_to_doc(model, layout)
    layout_doc["growth"] = {
        "baseline_bytes": growth.baseline_bytes,
        "custom_bytes": growth.custom_bytes,
        "worst_case_bytes": growth.worst_case_bytes,
    }
    _write(base / "layout.json", _dump(layout_doc))
    _write(base / "linker_script.txt", layout.linker_script)

    snapshots = []
    for trace in traces:
        trace_path = Path(trace)
        records = _simulate_one(model, plan, layout, trace_path, idc, sc)
        _write(base / f"{trace_path.stem}.log", simulator.render_log(records))
        snapshots.extend(r.pages for r in records)

    index = metrics.build_page_index(model, layout)
    try:
        doc = metrics.report_to_doc(metrics.summarize(index, snapshots))
    except metrics.ZeroTotal:
        doc = metrics.zero_total_doc(index, snapshots)
    _write(base / "report.json", _dump(doc))
    if fmt == "structured":
        click.echo(_dump(doc), nl=False)
    else:
        click.echo(metrics.render_table(doc), nl=False)


@main.command("fixtures")
@click.argument("name", type=click.Choice(sorted(fixtures.FIXTURES)))
@click.option("--out-dir", "out_dir", type=click.Path(file_okay=False), default=".",
              show_default=True)
@_handle_errors
def fixtures_cmd(name, out_dir) -> None:
    """Write a built-in example model and its traces to disk."""
    model_doc, traces = fixtures.FIXTURES[name]()
    base = Path(out_dir)
    model_file = base / f"{name}.model.json"
    _write(model_file, _dump(model_doc))
    click.echo(str(model_file))
    for trace_name, text in traces.items():
        trace_file = base / f"{name}.{trace_name}.trace"
        _write(trace_file, text)
        click.echo(str(trace_file))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port) -> None:
    """Run the HTTP analysis service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
