"""Small independent oracles shared by the test modules.

Everything here recomputes results from first principles without touching
the simulator's data structures, so assertions against these values are
genuine cross-checks rather than change detectors.
"""
from __future__ import annotations

from collections import defaultdict

from dmmopt.trace import EventKind, ProfilingReport


def brute_stats(report: ProfilingReport):
    """Replay with an explicit live map; returns (objects, total, peak, ops)."""
    live = {}
    objects = total = in_use = peak = 0
    for e in report.events:
        if e.kind is EventKind.ALLOC:
            objects += 1
            total += e.size
            in_use += e.size
            live[e.address] = e.size
            peak = max(peak, in_use)
        else:
            in_use -= live.pop(e.address)
    return objects, total, peak, len(report.events)


def next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def kingsley_oracle(report: ProfilingReport):
    """Independent Kingsley replay: power-of-two classes, LIFO stacks,
    no splitting or coalescing. Returns (time_units, memory_accesses,
    peak_bytes) under the default cost table."""
    stacks: dict[int, int] = defaultdict(int)  # cap -> free count
    live: dict[int, int] = {}
    t = acc = out = peak = 0
    for e in report.events:
        t += 1  # per-call base cost
        if e.kind is EventKind.ALLOC:
            cap = next_pow2(e.size)
            if stacks[cap] > 0:
                stacks[cap] -= 1
                t += 1  # one inspection: the newest block always fits
                acc += 2
            else:
                t += 1  # system request
                out += cap
                peak = max(peak, out)
            live[e.address] = cap
        else:
            stacks[live.pop(e.address)] += 1
    return t, acc, peak
