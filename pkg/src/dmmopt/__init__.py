"""Trace-driven DMM simulation and grammatical-evolution optimization."""

__version__ = "0.1.0"

from .heap_sim import (  # noqa: F401
    AllocationMechanism,
    AllocationPolicy,
    AllocatorClass,
    AllocatorSpec,
    CostModel,
    DataStructureKind,
    DmmSpec,
    Metrics,
    build_dmm,
    simulate,
)
from .trace import (  # noqa: F401
    ProfilingReport,
    SynthProfile,
    TraceStats,
    compute_stats,
    parse_trace,
    serialize_trace,
    synth_trace,
)
from .grammar import Grammar, decode, generate_grammar, parse_bnf, random_genome  # noqa: F401
from .evolution import FitnessContext, GEAConfig, compare, evolve, fitness, normalize  # noqa: F401
from . import reference_managers  # noqa: F401
