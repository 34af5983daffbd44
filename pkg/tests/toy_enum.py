"""Exhaustive enumeration of every DMM the two-size toy grammar can express.

The toy grammar (sizes {8, 4096}) admits exactly two bound structures:
one allocator over (0, 4096], or (0, 8] + (8, 4096]; three or more
allocators always duplicate a bound and decode invalid. Data-structure
choice never affects block selection, only inspection costs, so each
allocator position is simulated once per (class, split, coalesce,
mechanism, policy) combination and the BTREE time variant is
reconstructed exactly from the recorded per-allocator inspection counts
(DLL costs what SLL costs).

Allocators draw from disjoint arenas, so a composed DMM's per-allocator
behavior equals the same allocator simulated standalone on its request
subsequence; the joint pool trajectory is the sum of the standalone
trajectories. Both facts are asserted against joint simulations in the
test suite. This turns the 129,960-spec product into ~360 simulations
plus cheap trajectory merges.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from dmmopt.heap_sim import (
    AllocationMechanism,
    AllocationPolicy,
    AllocatorClass,
    AllocatorSpec,
    DataStructureKind,
    DmmSpec,
    simulate,
)
from dmmopt.trace import EventKind, ProfilingReport

BEHAVIOR_AXES = tuple(itertools.product(
    AllocatorClass, (False, True), (False, True),
    AllocationMechanism, AllocationPolicy,
))  # 5 * 2 * 2 * 3 * 2 = 120 combos per allocator position


def make_allocator(behavior, upper_bound, ds=DataStructureKind.SLL) -> AllocatorSpec:
    klass, split, coalesce, mech, policy = behavior
    return AllocatorSpec(
        klass=klass, split=split, coalesce=coalesce, upper_bound=upper_bound,
        ds=ds, mechanism=mech, policy=policy,
    )


def _inert_filler(upper_bound: int) -> AllocatorSpec:
    # occupies an allocator slot that never receives requests
    return AllocatorSpec(
        klass=AllocatorClass.SEGREGATED_FREE_LIST, split=False, coalesce=False,
        upper_bound=upper_bound, ds=DataStructureKind.SLL,
        mechanism=AllocationMechanism.FIRST, policy=AllocationPolicy.FIFO,
    )


def subtrace(report: ProfilingReport, lo: int, hi: int) -> tuple[ProfilingReport, list[int]]:
    """Events whose allocation size falls in (lo, hi], with original indices."""
    events = []
    index_map = []
    live = set()
    for i, e in enumerate(report.events):
        if e.kind is EventKind.ALLOC:
            if lo < e.size <= hi:
                live.add(e.address)
                events.append(e)
                index_map.append(i)
        elif e.address in live:
            live.discard(e.address)
            events.append(e)
            index_map.append(i)
    sizes = tuple(sorted({e.size for e in events if e.kind is EventKind.ALLOC}))
    sub = ProfilingReport(events=tuple(events), distinct_sizes=sizes,
                          max_size=sizes[-1] if sizes else 0)
    return sub, index_map


@dataclass
class AllocatorRun:
    """Standalone результат of one allocator position under one behavior."""

    time_linear: int
    time_btree: int
    growth_idx: np.ndarray  # original event indices where the pool changed
    growth_cum: np.ndarray  # pool bytes after each change
    final_pool: int

    @property
    def best_time(self) -> int:
        return min(self.time_linear, self.time_btree)


def run_position(report: ProfilingReport, observed, behavior,
                 position: int, lo: int, hi: int, page_size: int) -> AllocatorRun:
    sub, index_map = subtrace(report, lo, hi)
    spec_allocs = [make_allocator(behavior, hi)]
    alloc_index = 0
    if position == 1:
        spec_allocs.insert(0, _inert_filler(lo))
        alloc_index = 1
    spec = DmmSpec(tuple(spec_allocs))
    m = simulate(sub, spec, observed_sizes=observed, page_size=page_size,
                 record_growth=True)
    lin, btree = m.inspection_profile[alloc_index]
    idx = np.array([index_map[i] for i, _ in m.growth], dtype=np.int64)
    cum = np.array([p for _, p in m.growth], dtype=np.int64)
    return AllocatorRun(
        time_linear=m.time_units,
        time_btree=m.time_units - lin + btree,
        growth_idx=idx,
        growth_cum=cum,
        final_pool=m.current_bytes,
    )


def combined_peak(a: AllocatorRun, b: AllocatorRun) -> int:
    """Peak of the summed pool trajectories (events never coincide)."""
    if len(a.growth_idx) == 0:
        return int(b.growth_cum.max(initial=0))
    if len(b.growth_idx) == 0:
        return int(a.growth_cum.max(initial=0))
    # value of b's cumulative pool just before each a-change, and vice versa
    pos_b = np.searchsorted(b.growth_idx, a.growth_idx)
    b_at_a = np.where(pos_b > 0, b.growth_cum[pos_b - 1], 0)
    pos_a = np.searchsorted(a.growth_idx, b.growth_idx)
    a_at_b = np.where(pos_a > 0, a.growth_cum[pos_a - 1], 0)
    return int(max((a.growth_cum + b_at_a).max(), (b.growth_cum + a_at_b).max()))


@dataclass
class EnumerationResult:
    best_fitness: float
    best_description: str
    n_phenotypes: int


def enumerate_toy_space(report: ProfilingReport, t_kng: int, m_lea: int,
                        small: int = 8, big: int = 4096,
                        page_size: int = 4096) -> EnumerationResult:
    """Minimum fitness over every phenotype of the two-size grammar."""
    observed = report.distinct_sizes

    single = [run_position(report, observed, b, 0, 0, big, page_size)
              for b in BEHAVIOR_AXES]
    low = [run_position(report, observed, b, 0, 0, small, page_size)
           for b in BEHAVIOR_AXES]
    high = [run_position(report, observed, b, 1, small, big, page_size)
            for b in BEHAVIOR_AXES]

    best = None
    best_desc = ""
    n = 0
    for bi, run in zip(BEHAVIOR_AXES, single):
        n += 3  # SLL / DLL / BTREE phenotypes share one simulation
        for tname, t in (("lin", run.time_linear), ("btree", run.time_btree)):
            peak = int(run.growth_cum.max(initial=0))
            f = 0.5 * t / t_kng + 0.5 * peak / m_lea
            if best is None or f < best:
                best, best_desc = f, f"single {bi} ds={tname}"

    # Pair fitness separates into per-position time plus a joint peak, so
    # the best data structure per position can be chosen independently.
    low_t = np.array([r.best_time for r in low], dtype=np.int64)
    high_t = np.array([r.best_time for r in high], dtype=np.int64)
    for i, run_a in enumerate(low):
        for j, run_b in enumerate(high):
            n += 9  # ds variants share the peak
            peak = combined_peak(run_a, run_b)
            f = 0.5 * (low_t[i] + high_t[j]) / t_kng + 0.5 * peak / m_lea
            if f < best:
                best, best_desc = f, f"pair {BEHAVIOR_AXES[i]} + {BEHAVIOR_AXES[j]}"
    return EnumerationResult(best_fitness=best, best_description=best_desc,
                             n_phenotypes=n)
