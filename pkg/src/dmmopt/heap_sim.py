"""Heap simulator for composed dynamic memory managers.

A DMM is an ordered list of allocators, each serving the request range
(previous upper bound, own upper bound]. Replay is event-ordered and
entirely simulated: no real memory moves, only bookkeeping.

Cost model (one configurable table, see :class:`CostModel`): every
free-list element inspected costs one time unit and two memory accesses;
BTREE-backed lists charge ``ceil(log2(n+1))`` inspections for a list of
``n`` blocks while SLL and DLL are linear (DLL removal needs no
predecessor scan, SLL mid-list removal charges only the traversal already
counted, so the two differ in name only). Splits, coalesces, and system
requests cost one time unit each, plus one base unit per de/allocation
call.

Addressing: every allocator draws block addresses from its own arena (a
monotone bump pointer). Composed allocators manage disjoint regions, so
physical adjacency is only meaningful within one allocator, which is also
the only place the machinery consults it (non-buddy coalescing merges
same-allocator neighbors). Released addresses are never reused;
``pool_break`` tracks outstanding bytes and is the conservation and peak
quantity.

Buddy pairing uses a split-pair registry: an address-XOR rule is unsound
for chunk origins that are not aligned to their capacity and for
Fibonacci capacities, while the registry is exactly the XOR relation in
chunk-relative coordinates for binary buddies and generalizes to
Fibonacci splits.
"""
from __future__ import annotations

import enum
import json
from bisect import bisect_left
from dataclasses import dataclass
from typing import Optional, Sequence

from .trace import EventKind, ProfilingReport

ARENA_STRIDE = 1 << 48
DEFAULT_PAGE_SIZE = 4096


class SimulationError(Exception):
    """Base class for simulation failures."""


class OversizedRequestError(SimulationError):
    """A request exceeds the last allocator's upper bound."""


class DoubleFreeError(SimulationError):
    """Deallocation of a block that is not live."""


class EmptyRangeError(SimulationError):
    """An allocator's range contains no representable size class."""


class AllocatorClass(enum.Enum):
    SEGREGATED_FREE_LIST = "SegregatedFreeList"
    SIMPLE_SEGREGATED_STORAGE = "SimpleSegregatedStorage"
    EXACT_SEGREGATED_FIT = "ExactSegregatedFit"
    BUDDY_BINARY = "BuddySystemBinary"
    BUDDY_FIBONACCI = "BuddySystemFibonacci"


class DataStructureKind(enum.Enum):
    SLL = "SLL"
    DLL = "DLL"
    BTREE = "BTREE"


class AllocationMechanism(enum.Enum):
    FIRST = "FIRST"
    BEST = "BEST"
    EXACT = "EXACT"


class AllocationPolicy(enum.Enum):
    FIFO = "FIFO"
    LIFO = "LIFO"


_BUDDIES = (AllocatorClass.BUDDY_BINARY, AllocatorClass.BUDDY_FIBONACCI)


@dataclass(frozen=True)
class AllocatorSpec:
    """One allocator of a composed DMM.

    ``release`` models mmap-backed large objects: freed blocks return
    their bytes to the system instead of a free list (used by the Lea
    preset; never produced by genome decoding). ``size_classes``
    overrides the observed-size class set for exact-fit and
    simple-segregated-storage allocators (again preset-only).
    """

    klass: AllocatorClass
    split: bool
    coalesce: bool
    upper_bound: int
    ds: DataStructureKind
    mechanism: AllocationMechanism
    policy: AllocationPolicy
    release: bool = False
    size_classes: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.upper_bound < 1:
            raise ValueError("upper_bound must be >= 1")

    def to_dict(self) -> dict:
        d = {
            "class": self.klass.value,
            "split": self.split,
            "coalesce": self.coalesce,
            "upper_bound": self.upper_bound,
            "ds": self.ds.value,
            "mechanism": self.mechanism.value,
            "policy": self.policy.value,
        }
        if self.release:
            d["release"] = True
        if self.size_classes is not None:
            d["size_classes"] = list(self.size_classes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AllocatorSpec":
        return cls(
            klass=AllocatorClass(d["class"]),
            split=bool(d["split"]),
            coalesce=bool(d["coalesce"]),
            upper_bound=int(d["upper_bound"]),
            ds=DataStructureKind(d["ds"]),
            mechanism=AllocationMechanism(d["mechanism"]),
            policy=AllocationPolicy(d["policy"]),
            release=bool(d.get("release", False)),
            size_classes=tuple(d["size_classes"]) if d.get("size_classes") else None,
        )


@dataclass(frozen=True)
class DmmSpec:
    """Ordered allocator list; allocator i serves (upper_bound[i-1], upper_bound[i]]."""

    allocators: tuple[AllocatorSpec, ...]

    def __post_init__(self):
        if not self.allocators:
            raise ValueError("DmmSpec needs at least one allocator")
        bounds = [a.upper_bound for a in self.allocators]
        if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
            raise ValueError(f"upper bounds must strictly increase, got {bounds}")

    @property
    def upper_bounds(self) -> tuple[int, ...]:
        return tuple(a.upper_bound for a in self.allocators)

    def to_json(self) -> str:
        return json.dumps({"allocators": [a.to_dict() for a in self.allocators]}, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DmmSpec":
        data = json.loads(text)
        return cls(tuple(AllocatorSpec.from_dict(a) for a in data["allocators"]))


@dataclass(frozen=True)
class CostModel:
    """Operation charges; only the inspection costs come from the source
    cost accounting, the rest are artifact choices kept visible here."""

    inspect_time: int = 1
    inspect_accesses: int = 2
    split_time: int = 1
    coalesce_time: int = 1
    system_request_time: int = 1
    call_time: int = 1


DEFAULT_COSTS = CostModel()


@dataclass
class Metrics:
    time_units: int = 0
    memory_accesses: int = 0
    peak_bytes: int = 0
    current_bytes: int = 0
    n_allocs: int = 0
    n_frees: int = 0
    n_splits: int = 0
    n_coalesces: int = 0
    n_system_requests: int = 0
    # diagnostics beyond the core counters
    growth: Optional[list[tuple[int, int]]] = None  # (event index, pool_break)
    inspection_profile: tuple[tuple[int, int], ...] = ()  # per allocator (linear, btree)

    def as_dict(self) -> dict:
        return {
            "time_units": self.time_units,
            "memory_accesses": self.memory_accesses,
            "peak_bytes": self.peak_bytes,
            "current_bytes": self.current_bytes,
            "n_allocs": self.n_allocs,
            "n_frees": self.n_frees,
            "n_splits": self.n_splits,
            "n_coalesces": self.n_coalesces,
            "n_system_requests": self.n_system_requests,
        }


def binary_class_caps(lo: int, upper_bound: int) -> list[int]:
    """Power-of-two class capacities covering (lo, upper_bound].

    The top class extends to the next power of two at or above the bound,
    so blocks always carry splittable capacities.
    """
    caps = []
    c = 1
    while c <= lo:
        c <<= 1
    while True:
        caps.append(c)
        if c >= upper_bound:
            break
        c <<= 1
    return caps


def fibonacci_class_caps(lo: int, upper_bound: int) -> list[int]:
    """Fibonacci class capacities (1, 2, 3, 5, ...) covering (lo, upper_bound]."""
    a, b = 1, 2
    caps = []
    while True:
        if a > lo:
            caps.append(a)
        if a >= upper_bound:
            break
        a, b = b, a + b
    return caps


def _full_fibonacci_ladder(top: int) -> list[int]:
    a, b = 1, 2
    ladder = [1]
    while a < top:
        a, b = b, a + b
        ladder.append(a)
    return ladder


def _fib_split_halves(cap: int, ladder: list[int]) -> tuple[int, int]:
    # F_k -> (F_{k-1}, F_{k-2}); capacity 2 splits into two unit blocks.
    # The ladder is the full sequence, so clipped allocators can still
    # split donors whose halves fall below their lowest class.
    i = ladder.index(cap)
    if i >= 2:
        return ladder[i - 1], ladder[i - 2]
    if cap == 2:
        return 1, 1
    raise SimulationError(f"capacity {cap} cannot be split")


class _Allocator:
    """Runtime state of one allocator; built by :func:`build_dmm`."""

    __slots__ = (
        "spec", "lo", "ub", "klass", "split", "coalesce", "mechanism", "policy",
        "is_btree", "is_buddy", "is_sss", "rounds_to_class", "caps", "lists",
        "arena_base", "arena_next", "free_caps", "by_start", "by_end",
        "pair_registry", "full_ladder", "waste_bytes", "lin_inspections",
        "btree_inspections", "page_size",
    )

    def __init__(self, spec: AllocatorSpec, lo: int, observed: Sequence[int],
                 index: int, page_size: int):
        self.spec = spec
        self.lo = lo
        self.ub = spec.upper_bound
        self.klass = spec.klass
        self.split = spec.split
        self.coalesce = spec.coalesce
        self.mechanism = spec.mechanism
        self.policy = spec.policy
        self.is_btree = spec.ds is DataStructureKind.BTREE
        self.is_buddy = spec.klass in _BUDDIES
        self.is_sss = spec.klass is AllocatorClass.SIMPLE_SEGREGATED_STORAGE
        self.page_size = page_size

        k = spec.klass
        if k is AllocatorClass.SEGREGATED_FREE_LIST:
            self.caps = [self.ub]
            self.rounds_to_class = False
            self.full_ladder = None
        elif k is AllocatorClass.BUDDY_BINARY:
            self.caps = binary_class_caps(lo, self.ub)
            self.rounds_to_class = True
            self.full_ladder = self.caps
        elif k is AllocatorClass.BUDDY_FIBONACCI:
            self.caps = fibonacci_class_caps(lo, self.ub)
            self.rounds_to_class = True
            self.full_ladder = _full_fibonacci_ladder(self.caps[-1])
        else:  # exact segregated fit / simple segregated storage
            pool = spec.size_classes if spec.size_classes is not None else observed
            self.caps = sorted({s for s in pool if lo < s <= self.ub})
            if not self.caps:
                raise EmptyRangeError(
                    f"no size classes in ({lo}, {self.ub}] for {k.value}"
                )
            self.rounds_to_class = True
            self.full_ladder = None

        self.lists: list[list[tuple[int, int]]] = [[] for _ in self.caps]
        self.arena_base = index * ARENA_STRIDE
        self.arena_next = 0
        self.free_caps: dict[int, int] = {}  # addr -> cap, for every free block
        self.by_start: dict[int, int] = {}  # addr -> cap (non-buddy coalescing)
        self.by_end: dict[int, int] = {}  # addr + cap -> addr
        self.pair_registry: dict[tuple[int, int], tuple[int, int, int, int]] = {}
        self.waste_bytes = 0
        self.lin_inspections = 0
        self.btree_inspections = 0

    def class_index(self, size: int) -> int:
        i = bisect_left(self.caps, size)
        if i == len(self.caps):
            raise SimulationError(
                f"request {size} exceeds the largest class {self.caps[-1]}"
            )
        return i

    def placement_index(self, cap: int) -> int:
        # Largest class whose capacity is <= cap; undersized fragments
        # park in the lowest class and wait for a merge.
        i = bisect_left(self.caps, cap)
        if i < len(self.caps) and self.caps[i] == cap:
            return i
        return max(i - 1, 0)

    def search(self, ci: int, target: int) -> tuple[Optional[int], Optional[tuple[int, int]]]:
        """Find a block in class ``ci`` per the mechanism.

        Returns (index in arrival order, block) and records both linear
        and idealized-BTREE inspection counts for cost accounting.
        """
        blocks = self.lists[ci]
        n = len(blocks)
        self.btree_inspections += n.bit_length()  # == ceil(log2(n+1))
        mech = self.mechanism
        if self.policy is AllocationPolicy.FIFO:
            order = range(n)
        else:
            order = range(n - 1, -1, -1)
        visited = 0
        if mech is AllocationMechanism.BEST:
            best_i = None
            best_cap = None
            for i in order:
                visited += 1
                cap = blocks[i][1]
                if cap >= target and (best_cap is None or cap < best_cap):
                    best_i, best_cap = i, cap
            self.lin_inspections += visited
            return (best_i, blocks[best_i]) if best_i is not None else (None, None)
        if mech is AllocationMechanism.FIRST:
            for i in order:
                visited += 1
                if blocks[i][1] >= target:
                    self.lin_inspections += visited
                    return i, blocks[i]
        else:  # EXACT
            for i in order:
                visited += 1
                if blocks[i][1] == target:
                    self.lin_inspections += visited
                    return i, blocks[i]
        self.lin_inspections += visited
        return None, None


class DMM:
    """A built manager replaying against one heap state.

    Single-threaded per instance; distinct instances over the same
    immutable report may run concurrently.
    """

    __slots__ = (
        "spec", "allocators", "upper_bounds", "costs", "metrics", "live",
        "live_bytes", "free_bytes", "pool_break",
    )

    def __init__(self, spec: DmmSpec, allocators: list[_Allocator], costs: CostModel):
        self.spec = spec
        self.allocators = allocators
        self.upper_bounds = [a.ub for a in allocators]
        self.costs = costs
        self.metrics = Metrics()
        self.live: dict[int, tuple[int, int, int, int]] = {}  # key -> (ai, addr, cap, req)
        self.live_bytes = 0
        self.free_bytes = 0
        self.pool_break = 0

    # -- internal bookkeeping -------------------------------------------

    def _grow(self, nbytes: int) -> None:
        self.pool_break += nbytes
        m = self.metrics
        if self.pool_break > m.peak_bytes:
            m.peak_bytes = self.pool_break

    def _charge_search(self, a: _Allocator, before_lin: int, before_bt: int) -> None:
        c = self.costs
        if a.is_btree:
            n = a.btree_inspections - before_bt
        else:
            n = a.lin_inspections - before_lin
        self.metrics.time_units += n * c.inspect_time
        self.metrics.memory_accesses += n * c.inspect_accesses

    def _insert_free(self, a: _Allocator, addr: int, cap: int) -> None:
        # Arrival order at the tail; FIFO scans head-first (oldest served
        # first) and LIFO scans tail-first, which is head insertion in
        # list-order terms.
        ci = a.placement_index(cap)
        a.lists[ci].append((addr, cap))
        a.free_caps[addr] = cap
        self.free_bytes += cap
        if a.coalesce and not a.is_buddy and not a.is_sss:
            a.by_start[addr] = cap
            a.by_end[addr + cap] = addr

    def _remove_free(self, a: _Allocator, ci: int, idx: int) -> tuple[int, int]:
        addr, cap = a.lists[ci].pop(idx)
        del a.free_caps[addr]
        self.free_bytes -= cap
        if a.coalesce and not a.is_buddy and not a.is_sss:
            del a.by_start[addr]
            del a.by_end[addr + cap]
        return addr, cap

    def _remove_free_block(self, a: _Allocator, addr: int, cap: int) -> None:
        ci = a.placement_index(cap)
        a.lists[ci].remove((addr, cap))
        del a.free_caps[addr]
        self.free_bytes -= cap
        if a.coalesce and not a.is_buddy and not a.is_sss:
            del a.by_start[addr]
            del a.by_end[addr + cap]

    def _system_request(self, a: _Allocator, nbytes: int) -> tuple[int, int]:
        addr = a.arena_base + a.arena_next
        a.arena_next += nbytes
        self._grow(nbytes)
        self.metrics.n_system_requests += 1
        self.metrics.time_units += self.costs.system_request_time
        return addr, nbytes

    def _split_once(self, a: _Allocator, addr: int, cap: int,
                    left_cap: int, right_cap: int) -> tuple[int, int]:
        """Cut (addr, cap) into a kept left part and a freed right part."""
        self.metrics.n_splits += 1
        self.metrics.time_units += self.costs.split_time
        right_addr = addr + left_cap
        if a.is_buddy:
            a.pair_registry[(addr, left_cap)] = (right_addr, right_cap, addr, cap)
            a.pair_registry[(right_addr, right_cap)] = (addr, left_cap, addr, cap)
        self._insert_free(a, right_addr, right_cap)
        return addr, left_cap

    # -- allocation ------------------------------------------------------

    def allocate(self, requested: int, key: int) -> None:
        if requested > self.upper_bounds[-1]:
            raise OversizedRequestError(
                f"request of {requested} exceeds bound {self.upper_bounds[-1]}"
            )
        m = self.metrics
        m.n_allocs += 1
        m.time_units += self.costs.call_time
        ai = bisect_left(self.upper_bounds, requested)
        a = self.allocators[ai]

        ci = a.class_index(requested) if a.rounds_to_class else 0
        target = a.caps[ci] if a.rounds_to_class else requested

        lin0, bt0 = a.lin_inspections, a.btree_inspections
        idx, blk = a.search(ci, target)
        self._charge_search(a, lin0, bt0)
        addr = cap = None
        if blk is not None:
            addr, cap = self._remove_free(a, ci, idx)
        elif a.split and not a.is_sss and len(a.caps) > 1:
            # look for a donor in larger classes, smallest first
            for cj in range(ci + 1, len(a.caps)):
                lin0, bt0 = a.lin_inspections, a.btree_inspections
                idx, blk = a.search(cj, a.caps[cj])
                self._charge_search(a, lin0, bt0)
                if blk is not None:
                    addr, cap = self._remove_free(a, cj, idx)
                    if a.is_buddy:
                        while cap > target:
                            left, right = (
                                (cap >> 1, cap >> 1)
                                if a.klass is AllocatorClass.BUDDY_BINARY
                                else _fib_split_halves(cap, a.full_ladder)
                            )
                            addr, cap = self._split_once(a, addr, cap, left, right)
                    else:
                        addr, cap = self._split_once(a, addr, cap, target, cap - target)
                    break

        if addr is None:
            if a.is_sss:
                addr, cap = self._carve_page(a, ci)
            else:
                addr, cap = self._system_request(a, target)
        elif a.split and not a.is_buddy and cap > target:
            # range lists and merged exact-fit blocks can exceed the target
            addr, cap = self._split_once(a, addr, cap, target, cap - target)

        self.live[key] = (ai, addr, cap, requested)
        self.live_bytes += cap

    def _carve_page(self, a: _Allocator, ci: int) -> tuple[int, int]:
        # whole pages per class; unused tails are never reused
        slot = a.caps[ci]
        pages = -(-slot // a.page_size)  # ceil
        nbytes = pages * a.page_size
        addr, _ = self._system_request(a, nbytes)
        nslots = nbytes // slot
        waste = nbytes - nslots * slot
        a.waste_bytes += waste
        self.free_bytes += waste
        for i in range(1, nslots):
            self._insert_free(a, addr + i * slot, slot)
        return addr, slot

    # -- deallocation ----------------------------------------------------

    def deallocate(self, key: int) -> None:
        entry = self.live.pop(key, None)
        if entry is None:
            raise DoubleFreeError(f"free of address {key:#x} with no live block")
        ai, addr, cap, _req = entry
        m = self.metrics
        m.n_frees += 1
        m.time_units += self.costs.call_time
        a = self.allocators[ai]
        self.live_bytes -= cap

        if a.spec.release:
            self.pool_break -= cap
            return

        if a.coalesce and a.is_buddy:
            while True:
                ent = a.pair_registry.get((addr, cap))
                if ent is None:
                    break
                sib_addr, sib_cap, parent_addr, parent_cap = ent
                if a.free_caps.get(sib_addr) != sib_cap:
                    break
                self._remove_free_block(a, sib_addr, sib_cap)
                del a.pair_registry[(addr, cap)]
                del a.pair_registry[(sib_addr, sib_cap)]
                addr, cap = parent_addr, parent_cap
                m.n_coalesces += 1
                m.time_units += self.costs.coalesce_time
        elif a.coalesce and not a.is_sss:
            left_addr = a.by_end.get(addr)
            if left_addr is not None:
                left_cap = a.free_caps[left_addr]
                self._remove_free_block(a, left_addr, left_cap)
                addr = left_addr
                cap += left_cap
                m.n_coalesces += 1
                m.time_units += self.costs.coalesce_time
            right_cap = a.by_start.get(addr + cap)
            if right_cap is not None:
                self._remove_free_block(a, addr + cap, right_cap)
                cap += right_cap
                m.n_coalesces += 1
                m.time_units += self.costs.coalesce_time

        self._insert_free(a, addr, cap)

    def check_conservation(self) -> None:
        if self.live_bytes + self.free_bytes != self.pool_break:
            raise SimulationError(
                f"conservation violated: live {self.live_bytes} + free "
                f"{self.free_bytes} != pool {self.pool_break}"
            )


def build_dmm(spec: DmmSpec, observed_sizes: Sequence[int], *,
              costs: CostModel = DEFAULT_COSTS,
              page_size: int = DEFAULT_PAGE_SIZE) -> DMM:
    """Expand a spec into runtime allocators with their size classes."""
    allocators = []
    lo = 0
    for i, aspec in enumerate(spec.allocators):
        allocators.append(_Allocator(aspec, lo, observed_sizes, i, page_size))
        lo = aspec.upper_bound
    return DMM(spec, allocators, costs)


def class_map(spec: DmmSpec, observed_sizes: Sequence[int], *,
              page_size: int = DEFAULT_PAGE_SIZE) -> list[dict]:
    """Expanded per-class view of a spec: one row per size class.

    This is the "map" rendering of a manager: every row carries the
    owning allocator's configuration plus the class range it serves.
    """
    dmm = build_dmm(spec, observed_sizes, page_size=page_size)
    rows = []
    for index, a in enumerate(dmm.allocators):
        lo = a.lo
        for cap in a.caps:
            rows.append({
                "allocator": index,
                "class": a.klass.value,
                "split": a.split,
                "coalesce": a.coalesce,
                "range_lo": lo,
                "range_hi": cap if a.rounds_to_class else a.ub,
                "capacity": cap,
                "ds": a.spec.ds.value,
                "mechanism": a.mechanism.value,
                "policy": a.policy.value,
            })
            lo = cap
    return rows


def simulate(report: ProfilingReport, spec: DmmSpec, *,
             observed_sizes: Optional[Sequence[int]] = None,
             costs: CostModel = DEFAULT_COSTS,
             page_size: int = DEFAULT_PAGE_SIZE,
             check_conservation: bool = False,
             record_growth: bool = False) -> Metrics:
    """Replay a report against a spec and return the metrics.

    Pure function of its inputs: identical arguments give identical
    metrics regardless of scheduling.
    """
    if report.max_size > spec.upper_bounds[-1]:
        raise OversizedRequestError(
            f"trace max size {report.max_size} exceeds the last upper bound "
            f"{spec.upper_bounds[-1]}"
        )
    dmm = build_dmm(
        spec,
        observed_sizes if observed_sizes is not None else report.distinct_sizes,
        costs=costs,
        page_size=page_size,
    )
    growth: Optional[list[tuple[int, int]]] = [] if record_growth else None
    last_pool = 0
    alloc = dmm.allocate
    free = dmm.deallocate
    for i, e in enumerate(report.events):
        if e.kind is EventKind.ALLOC:
            alloc(e.size, e.address)
        else:
            free(e.address)
        if check_conservation:
            dmm.check_conservation()
        if growth is not None and dmm.pool_break != last_pool:
            last_pool = dmm.pool_break
            growth.append((i, last_pool))
    m = dmm.metrics
    m.current_bytes = dmm.pool_break
    m.growth = growth
    m.inspection_profile = tuple(
        (a.lin_inspections, a.btree_inspections) for a in dmm.allocators
    )
    return m
