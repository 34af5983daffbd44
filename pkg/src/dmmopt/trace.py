"""Allocation-trace parsing, statistics, and synthesis.

The trace file format is line oriented and shared with the capture shim:

    malloc <time> <size> <addr>
    free <time> <addr>

``time`` is decimal seconds, ``size`` decimal bytes, ``addr`` either
``0x``-prefixed lowercase hex or decimal. Lines are ``\\n``-separated with
no header. Timestamps are preserved but replay is order-driven, so they
never influence simulation results.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np


class TraceError(ValueError):
    """Base class for trace input failures."""


class MalformedLineError(TraceError):
    """A line that is neither a valid malloc nor free record."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class EmptyTraceError(TraceError):
    """Raised by consumers that need at least one allocation."""


class EventKind(enum.Enum):
    ALLOC = "malloc"
    FREE = "free"


@dataclass(frozen=True, slots=True)
class TraceEvent:
    kind: EventKind
    timestamp: float
    size: int  # 0 for FREE events
    address: int


@dataclass(frozen=True, slots=True)
class Diagnostic:
    """Non-fatal parse finding; the offending event was dropped or patched."""

    kind: str  # "dangling_free" | "zero_size_alloc"
    line_no: int
    message: str


@dataclass(frozen=True)
class ProfilingReport:
    """Validated event stream plus derived size information.

    Immutable after construction; safe to share read-only between
    concurrent simulations.
    """

    events: tuple[TraceEvent, ...]
    distinct_sizes: tuple[int, ...]
    max_size: int
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def n_allocs(self) -> int:
        return sum(1 for e in self.events if e.kind is EventKind.ALLOC)

    @property
    def n_frees(self) -> int:
        return len(self.events) - self.n_allocs


@dataclass(frozen=True)
class TraceStats:
    objects: int
    total_memory: int
    max_in_use: int
    average_size: float
    memory_ops: int

    def as_dict(self) -> dict:
        return {
            "objects": self.objects,
            "total_memory": self.total_memory,
            "max_in_use": self.max_in_use,
            "average_size": round(self.average_size, 2),
            "memory_ops": self.memory_ops,
        }


def _parse_addr(token: str) -> int:
    if token.startswith(("0x", "0X")):
        return int(token, 16)
    return int(token, 10)


def parse_trace(text: str | Iterable[str]) -> ProfilingReport:
    """Parse trace text into a :class:`ProfilingReport`.

    Dangling or double frees are dropped with a diagnostic: real traces
    contain frees of memory allocated before the recorder attached.
    Zero-sized allocations are normalized to one byte with a diagnostic.
    Raises :class:`MalformedLineError` for unparseable lines.
    """
    if isinstance(text, str):
        lines = text.splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in text]

    events: list[TraceEvent] = []
    diagnostics: list[Diagnostic] = []
    sizes: set[int] = set()
    live: dict[int, int] = {}  # address -> index of the live alloc

    for line_no, raw in enumerate(lines, start=1):
        tokens = raw.split()
        if not tokens:
            continue
        op = tokens[0]
        try:
            if op == "malloc":
                if len(tokens) != 4:
                    raise ValueError("expected: malloc <time> <size> <addr>")
                ts = float(tokens[1])
                size = int(tokens[2], 10)
                addr = _parse_addr(tokens[3])
            elif op == "free":
                if len(tokens) != 3:
                    raise ValueError("expected: free <time> <addr>")
                ts = float(tokens[1])
                size = 0
                addr = _parse_addr(tokens[2])
            else:
                raise ValueError(f"unknown operation {op!r}")
        except ValueError as exc:
            raise MalformedLineError(line_no, str(exc)) from None
        if addr == 0:
            raise MalformedLineError(line_no, "zero address")

        if op == "malloc":
            if size < 0:
                raise MalformedLineError(line_no, f"negative size {size}")
            if size == 0:
                diagnostics.append(
                    Diagnostic("zero_size_alloc", line_no, "size 0 normalized to 1")
                )
                size = 1
            if addr in live:
                # The recorder saw the same address twice without a free in
                # between; treat the earlier allocation as leaked.
                del live[addr]
            live[addr] = len(events)
            sizes.add(size)
            events.append(TraceEvent(EventKind.ALLOC, ts, size, addr))
        else:
            if addr not in live:
                diagnostics.append(
                    Diagnostic(
                        "dangling_free", line_no, f"free of unknown address {addr:#x}"
                    )
                )
                continue
            del live[addr]
            events.append(TraceEvent(EventKind.FREE, ts, 0, addr))

    ordered = tuple(sorted(sizes))
    return ProfilingReport(
        events=tuple(events),
        distinct_sizes=ordered,
        max_size=ordered[-1] if ordered else 0,
        diagnostics=tuple(diagnostics),
    )


def serialize_trace(report: ProfilingReport) -> str:
    """Render a report in canonical trace form (hex addresses, single spaces)."""
    out = []
    for e in report.events:
        if e.kind is EventKind.ALLOC:
            out.append(f"malloc {e.timestamp} {e.size} {e.address:#x}\n")
        else:
            out.append(f"free {e.timestamp} {e.address:#x}\n")
    return "".join(out)


def compute_stats(report: ProfilingReport) -> TraceStats:
    """Workload statistics: object count, totals, live-set peak, op count."""
    objects = 0
    total = 0
    in_use = 0
    peak = 0
    live: dict[int, int] = {}
    for e in report.events:
        if e.kind is EventKind.ALLOC:
            objects += 1
            total += e.size
            in_use += e.size
            live[e.address] = e.size
            if in_use > peak:
                peak = in_use
        else:
            in_use -= live.pop(e.address)
    return TraceStats(
        objects=objects,
        total_memory=total,
        max_in_use=peak,
        average_size=(total / objects) if objects else 0.0,
        memory_ops=len(report.events),
    )


def distinct_sizes(report: ProfilingReport) -> tuple[int, ...]:
    """Ascending deduplicated allocation sizes (feeds grammar generation)."""
    return report.distinct_sizes


@dataclass(frozen=True)
class SynthProfile:
    """Parameters for synthetic trace generation.

    ``lifetime_scale`` sets the equilibrium live-object count: the chance
    of emitting a free grows as the live set approaches it, which keeps
    free lists small and lifetimes geometric-ish.
    """

    size_weights: Mapping[int, float]
    event_count: int
    seed: int
    lifetime_scale: float = 32.0
    drain: bool = False  # append frees for everything still live at the end


def synth_trace(profile: SynthProfile) -> ProfilingReport:
    """Generate a deterministic synthetic trace.

    Every free targets a live allocation by construction, so the result
    always passes parse-level validation.
    """
    if profile.event_count < 0:
        raise ValueError("event_count must be >= 0")
    sizes = sorted(profile.size_weights)
    if profile.event_count > 0 and not sizes:
        raise ValueError("size_weights must not be empty")
    weights = np.array([float(profile.size_weights[s]) for s in sizes], dtype=float)
    if len(weights) and (weights <= 0).any():
        raise ValueError("weights must be positive")
    probs = weights / weights.sum() if len(weights) else weights

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((profile.seed, 0x5EED))))
    events: list[TraceEvent] = []
    live: list[tuple[int, int]] = []  # (address, size)
    next_addr = 0x1000
    scale = float(profile.lifetime_scale)

    def emit_free(ts: float) -> None:
        idx = int(rng.integers(0, len(live)))
        addr, _ = live.pop(idx)
        events.append(TraceEvent(EventKind.FREE, ts, 0, addr))

    for step in range(profile.event_count):
        ts = round(step * 0.001, 6)
        p_free = len(live) / (len(live) + scale) if live else 0.0
        if live and rng.random() < p_free:
            emit_free(ts)
        else:
            size = int(sizes[int(rng.choice(len(sizes), p=probs))])
            events.append(TraceEvent(EventKind.ALLOC, ts, size, next_addr))
            live.append((next_addr, size))
            next_addr += 0x10
    if profile.drain:
        step = profile.event_count
        while live:
            emit_free(round(step * 0.001, 6))
            step += 1

    seen = tuple(sorted({e.size for e in events if e.kind is EventKind.ALLOC}))
    return ProfilingReport(
        events=tuple(events),
        distinct_sizes=seen,
        max_size=seen[-1] if seen else 0,
    )
