"""HTTP analysis service exposing the pipeline stages as endpoints.

All operations are stateless: each request carries the model document (and
trace text where needed) and gets the full result document back, so many
clients can share one service instance.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import analysis, fixtures, layout as layout_mod, metrics, simulator
from .errors import DeckforgeError
from .model import load_model

app = FastAPI(
    title="deckforge",
    description="Deck planning, page layout, trace simulation and gadget metrics.",
)


class AnalyzeRequest(BaseModel):
    model: dict


class LayoutRequest(BaseModel):
    model: dict
    page_size: int = Field(default=layout_mod.DEFAULT_PAGE_SIZE, gt=0)


class SimulateRequest(BaseModel):
    model: dict
    trace: str
    page_size: int = Field(default=layout_mod.DEFAULT_PAGE_SIZE, gt=0)
    idc: bool = True
    sc: bool = True


class ReportRequest(BaseModel):
    model: dict
    logs: list[str]
    layout: dict | None = None
    page_size: int = Field(default=layout_mod.DEFAULT_PAGE_SIZE, gt=0)


class PipelineRequest(BaseModel):
    model: dict
    traces: list[str]
    page_size: int = Field(default=layout_mod.DEFAULT_PAGE_SIZE, gt=0)
    idc: bool = True
    sc: bool = True


class LayoutResponse(BaseModel):
    layout: dict
    linker_script: str
    growth: dict


class SimulateResponse(BaseModel):
    log: str
    records: int


class PipelineResponse(BaseModel):
    plan: dict
    layout: dict
    linker_script: str
    growth: dict
    logs: list[str]
    report: dict


def _load(model_doc: dict):
    try:
        return load_model(model_doc)
    except DeckforgeError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def _growth_doc(growth: layout_mod.GrowthReport) -> dict:
    return {
        "baseline_bytes": growth.baseline_bytes,
        "custom_bytes": growth.custom_bytes,
        "worst_case_bytes": growth.worst_case_bytes,
        "growth": growth.growth,
        "improvement": growth.improvement,
    }


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.post("/analyze")
def analyze(req: AnalyzeRequest) -> dict:
    model = _load(req.model)
    return analysis.plan_to_doc(analysis.plan_instrumentation(model))


@app.post("/layout", response_model=LayoutResponse)
def layout(req: LayoutRequest) -> LayoutResponse:
    model = _load(req.model)
    plan = analysis.plan_instrumentation(model)
    _, built = layout_mod.build_layout(model, plan, req.page_size)
    growth = layout_mod.growth_report(model, built)
    return LayoutResponse(
        layout=layout_mod.layout_to_doc(model, built),
        linker_script=built.linker_script,
        growth=_growth_doc(growth),
    )


@app.post("/simulate", response_model=SimulateResponse)
def simulate(req: SimulateRequest) -> SimulateResponse:
    model = _load(req.model)
    plan = analysis.plan_instrumentation(model)
    _, built = layout_mod.build_layout(model, plan, req.page_size)
    try:
        events = simulator.parse_trace(req.trace)
        records = simulator.simulate(
            model, plan, built, events, idc=req.idc, sc=req.sc
        )
    except DeckforgeError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return SimulateResponse(log=simulator.render_log(records), records=len(records))


@app.post("/report")
def report(req: ReportRequest) -> dict:
    model = _load(req.model)
    if req.layout is not None:
        built = layout_mod.layout_from_doc(model, req.layout)
    else:
        plan = analysis.plan_instrumentation(model)
        _, built = layout_mod.build_layout(model, plan, req.page_size)
    try:
        snapshots = []
        for text in req.logs:
            snapshots.extend(r.pages for r in simulator.parse_log(text))
        if not snapshots:
            raise HTTPException(status_code=422, detail="no log records supplied")
        index = metrics.build_page_index(model, built)
        try:
            return metrics.report_to_doc(metrics.summarize(index, snapshots))
        except metrics.ZeroTotal:
            return metrics.zero_total_doc(index, snapshots)
    except DeckforgeError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.post("/pipeline", response_model=PipelineResponse)
def pipeline(req: PipelineRequest) -> PipelineResponse:
    model = _load(req.model)
    plan = analysis.plan_instrumentation(model)
    _, built = layout_mod.build_layout(model, plan, req.page_size)
    growth = layout_mod.growth_report(model, built)
    try:
        logs = []
        snapshots = []
        for text in req.traces:
            events = simulator.parse_trace(text)
            records = simulator.simulate(
                model, plan, built, events, idc=req.idc, sc=req.sc
            )
            logs.append(simulator.render_log(records))
            snapshots.extend(r.pages for r in records)
        index = metrics.build_page_index(model, built)
        try:
            report_doc = metrics.report_to_doc(metrics.summarize(index, snapshots))
        except metrics.ZeroTotal:
            report_doc = metrics.zero_total_doc(index, snapshots)
    except DeckforgeError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return PipelineResponse(
        plan=analysis.plan_to_doc(plan),
        layout=layout_mod.layout_to_doc(model, built),
        linker_script=built.linker_script,
        growth=_growth_doc(growth),
        logs=logs,
        report=report_doc,
    )


@app.get("/fixtures")
def list_fixtures() -> dict:
    return {"fixtures": sorted(fixtures.FIXTURES)}


@app.get("/fixtures/{name}")
def get_fixture(name: str) -> dict:
    if name not in fixtures.FIXTURES:
        raise HTTPException(status_code=404, detail=f"no fixture named {name!r}")
    model_doc, traces = fixtures.FIXTURES[name]()
    return {"model": model_doc, "traces": traces}
