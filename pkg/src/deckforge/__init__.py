"""deckforge: on-demand code-activation planning, page layout, trace
simulation, and gadget-surface metrics for whole programs."""

from .analysis import (
    DeckKind,
    DeckPoint,
    EncompassedSets,
    InstrumentationPlan,
    compute_encompassed,
    plan_instrumentation,
)
from .layout import (
    DeckSet,
    DisjointLayout,
    GrowthReport,
    assign_pages,
    build_deck_sets,
    build_layout,
    create_disjoint_sets,
    growth_report,
)
from .metrics import (
    PageGadgetIndex,
    ReductionReport,
    build_page_index,
    chain_available,
    chain_break_study,
    reduction_for,
    summarize,
    total_gadgets,
)
from .model import (
    CallSite,
    FunctionDef,
    GadgetProfile,
    LoopDef,
    ParseError,
    ProgramModel,
    ValidationError,
    direct_callgraph,
    load_model,
    load_model_file,
)
from .simulator import (
    LogRecord,
    RuntimeState,
    TraceError,
    TraceEvent,
    UnknownTarget,
    UnpairedEnd,
    parse_log,
    parse_trace,
    render_log,
    simulate,
)

__version__ = "0.1.0"
