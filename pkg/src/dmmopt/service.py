"""HTTP service wrapping the simulator and optimizer.

Traces travel as raw text in request bodies so a remote service needs no
shared filesystem. Domain failures map to 400 (bad input) or 409
(simulation errors); the CLI translates these into its exit codes.
"""
from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from . import evolution, grammar as grammar_mod, heap_sim, reference_managers, trace


class AllocatorSpecModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    klass: str = Field(alias="class")
    split: bool
    coalesce: bool
    upper_bound: int
    ds: str
    mechanism: str
    policy: str
    release: bool = False
    size_classes: Optional[list[int]] = None

    @classmethod
    def from_spec(cls, spec: heap_sim.AllocatorSpec) -> "AllocatorSpecModel":
        return cls.model_validate(spec.to_dict())

    def to_spec(self) -> heap_sim.AllocatorSpec:
        return heap_sim.AllocatorSpec.from_dict(self.model_dump(by_alias=True))


class DmmSpecModel(BaseModel):
    allocators: list[AllocatorSpecModel]

    @classmethod
    def from_spec(cls, spec: heap_sim.DmmSpec) -> "DmmSpecModel":
        return cls(allocators=[AllocatorSpecModel.from_spec(a) for a in spec.allocators])

    def to_spec(self) -> heap_sim.DmmSpec:
        return heap_sim.DmmSpec(tuple(a.to_spec() for a in self.allocators))


class MetricsModel(BaseModel):
    time_units: int
    memory_accesses: int
    peak_bytes: int
    current_bytes: int
    n_allocs: int
    n_frees: int
    n_splits: int
    n_coalesces: int
    n_system_requests: int

    @classmethod
    def from_metrics(cls, m: heap_sim.Metrics) -> "MetricsModel":
        return cls(**m.as_dict())


class TraceRequest(BaseModel):
    trace: str


class StatsResponse(BaseModel):
    objects: int
    total_memory: int
    max_in_use: int
    average_size: float
    memory_ops: int
    diagnostics: list[str]


class SynthRequest(BaseModel):
    size_weights: dict[int, float]
    event_count: int
    seed: int
    lifetime_scale: float = 32.0
    drain: bool = False


class SynthResponse(BaseModel):
    trace: str


class GrammarResponse(BaseModel):
    grammar: str
    codon_domain: int


class SimulateRequest(BaseModel):
    trace: str
    dmm: Optional[str] = None  # preset name: kng|lea|fib|s10|exa
    spec: Optional[DmmSpecModel] = None
    page_size: int = heap_sim.DEFAULT_PAGE_SIZE


class SimulateResponse(BaseModel):
    metrics: MetricsModel
    spec: DmmSpecModel


class GEAConfigModel(BaseModel):
    population_size: int = 100
    elite_size: int = 10
    generations: int = 250
    tournament_size: int = 2
    crossover_probability: float = 0.80
    mutation_probability: float = 0.02
    max_wraps: int = 3
    genome_length_range: tuple[int, int] = (20, 60)
    codon_domain: Optional[int] = None
    rng_seed: int = 0
    target_fitness: Optional[float] = None

    def to_config(self) -> evolution.GEAConfig:
        return evolution.GEAConfig(**self.model_dump())


class EvolveRequest(BaseModel):
    trace: str
    config: GEAConfigModel = GEAConfigModel()
    seed: Optional[int] = None  # overrides config.rng_seed
    grammar: Optional[str] = None  # BNF text; default: generated from the trace
    page_size: int = heap_sim.DEFAULT_PAGE_SIZE


class EvolveResponse(BaseModel):
    best_spec: DmmSpecModel
    best_fitness: float
    best_genome: list[int]
    history: list[tuple[int, float, float]]
    evaluations: int
    distinct_simulations: int
    t_kng: int
    m_lea: int
    config: GEAConfigModel


class CompareSpecEntry(BaseModel):
    name: str
    preset: Optional[str] = None
    spec: Optional[DmmSpecModel] = None


class CompareRequest(BaseModel):
    trace: str
    specs: list[CompareSpecEntry]
    page_size: int = heap_sim.DEFAULT_PAGE_SIZE


class CompareRowModel(BaseModel):
    name: str
    fitness: float
    time_ratio: float
    memory_ratio: float
    time_units: int
    peak_bytes: int


class CompareResponse(BaseModel):
    rows: list[CompareRowModel]
    improvements: list[list[float]]
    t_kng: int
    m_lea: int


def _parse_or_400(text: str) -> trace.ProfilingReport:
    try:
        return trace.parse_trace(text)
    except trace.TraceError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None


def _spec_from_request(report: trace.ProfilingReport, preset_name: Optional[str],
                       spec_model: Optional[DmmSpecModel]) -> heap_sim.DmmSpec:
    if (preset_name is None) == (spec_model is None):
        raise HTTPException(status_code=400, detail="provide exactly one of dmm/spec")
    try:
        if preset_name is not None:
            return reference_managers.preset(preset_name, report)
        return spec_model.to_spec()
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None


app = FastAPI(title="dmmopt", version=__version__)


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/trace/stats", response_model=StatsResponse)
def trace_stats(req: TraceRequest) -> StatsResponse:
    report = _parse_or_400(req.trace)
    stats = trace.compute_stats(report)
    return StatsResponse(
        **stats.as_dict() | {"average_size": stats.average_size},
        diagnostics=[f"{d.kind} at line {d.line_no}: {d.message}" for d in report.diagnostics],
    )


@app.post("/trace/synth", response_model=SynthResponse)
def trace_synth(req: SynthRequest) -> SynthResponse:
    try:
        report = trace.synth_trace(trace.SynthProfile(
            size_weights=req.size_weights,
            event_count=req.event_count,
            seed=req.seed,
            lifetime_scale=req.lifetime_scale,
            drain=req.drain,
        ))
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    return SynthResponse(trace=trace.serialize_trace(report))


@app.post("/grammar/generate", response_model=GrammarResponse)
def grammar_generate(req: TraceRequest) -> GrammarResponse:
    report = _parse_or_400(req.trace)
    try:
        g = grammar_mod.generate_grammar(report)
    except trace.EmptyTraceError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    return GrammarResponse(grammar=grammar_mod.serialize_bnf(g), codon_domain=g.codon_domain)


@app.post("/simulate", response_model=SimulateResponse)
def simulate_endpoint(req: SimulateRequest) -> SimulateResponse:
    report = _parse_or_400(req.trace)
    spec = _spec_from_request(report, req.dmm, req.spec)
    try:
        metrics = heap_sim.simulate(report, spec, page_size=req.page_size)
    except heap_sim.SimulationError as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from None
    return SimulateResponse(
        metrics=MetricsModel.from_metrics(metrics),
        spec=DmmSpecModel.from_spec(spec),
    )


@app.post("/evolve", response_model=EvolveResponse)
def evolve_endpoint(req: EvolveRequest) -> EvolveResponse:
    report = _parse_or_400(req.trace)
    cfg_model = req.config
    if req.seed is not None:
        cfg_model = cfg_model.model_copy(update={"rng_seed": req.seed})
    try:
        config = cfg_model.to_config()
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    try:
        if req.grammar is not None:
            g = grammar_mod.parse_bnf(req.grammar)
        else:
            g = grammar_mod.generate_grammar(report)
    except (grammar_mod.GrammarError, trace.EmptyTraceError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    try:
        ctx = evolution.normalize(report, page_size=req.page_size)
        result = evolution.evolve(report, g, config, page_size=req.page_size, ctx=ctx)
    except trace.EmptyTraceError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    except heap_sim.SimulationError as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from None
    best = result.best
    if best.spec is None:
        raise HTTPException(status_code=409, detail="every individual decoded invalid")
    return EvolveResponse(
        best_spec=DmmSpecModel.from_spec(best.spec),
        best_fitness=best.fitness,
        best_genome=list(best.genome),
        history=result.history,
        evaluations=result.evaluations,
        distinct_simulations=result.distinct_simulations,
        t_kng=ctx.t_kng,
        m_lea=ctx.m_lea,
        config=cfg_model,
    )


class DescribeRequest(BaseModel):
    trace: str  # supplies the observed sizes for exact-fit class sets
    dmm: Optional[str] = None
    spec: Optional[DmmSpecModel] = None
    page_size: int = heap_sim.DEFAULT_PAGE_SIZE


class ClassRowModel(BaseModel):
    allocator: int
    klass: str = Field(alias="class")
    split: bool
    coalesce: bool
    range_lo: int
    range_hi: int
    capacity: int
    ds: str
    mechanism: str
    policy: str
    model_config = ConfigDict(populate_by_name=True)


class DescribeResponse(BaseModel):
    rows: list[ClassRowModel]
    spec: DmmSpecModel


@app.post("/describe", response_model=DescribeResponse)
def describe_endpoint(req: DescribeRequest) -> DescribeResponse:
    report = _parse_or_400(req.trace)
    spec = _spec_from_request(report, req.dmm, req.spec)
    try:
        rows = heap_sim.class_map(spec, report.distinct_sizes, page_size=req.page_size)
    except heap_sim.SimulationError as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from None
    return DescribeResponse(
        rows=[ClassRowModel.model_validate(r) for r in rows],
        spec=DmmSpecModel.from_spec(spec),
    )


@app.post("/compare", response_model=CompareResponse)
def compare_endpoint(req: CompareRequest) -> CompareResponse:
    report = _parse_or_400(req.trace)
    named = [
        (entry.name, _spec_from_request(report, entry.preset, entry.spec))
        for entry in req.specs
    ]
    try:
        ctx = evolution.normalize(report, page_size=req.page_size)
        comparison = evolution.compare(report, named, page_size=req.page_size, ctx=ctx)
    except trace.EmptyTraceError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    except heap_sim.SimulationError as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from None
    return CompareResponse(
        rows=[CompareRowModel(**row.__dict__) for row in comparison.rows],
        improvements=[list(r) for r in comparison.improvements],
        t_kng=ctx.t_kng,
        m_lea=ctx.m_lea,
    )
