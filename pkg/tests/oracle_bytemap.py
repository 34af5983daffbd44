"""Independent replay oracle: explicit block records, full rescans.

Checks peak pool bytes (and byte conservation) against the simulator
without sharing any of its data structures: no per-class free lists, no
adjacency indices, no split registry. Free blocks are rediscovered by
scanning a flat record table per event; buddy siblings are recomputed by
walking the canonical split tree of the owning chunk from scratch.
Costs are out of scope here; only placement is modeled.
"""
from __future__ import annotations

from dmmopt.heap_sim import AllocationMechanism, AllocationPolicy, AllocatorClass
from dmmopt.trace import EventKind

_BUDDIES = (AllocatorClass.BUDDY_BINARY, AllocatorClass.BUDDY_FIBONACCI)


def _pow2_caps(lo, ub):
    caps, c = [], 1
    while c <= lo:
        c *= 2
    while True:
        caps.append(c)
        if c >= ub:
            return caps
        c *= 2


def _fib_sequence(top):
    seq = [1, 2]
    while seq[-1] < top:
        seq.append(seq[-1] + seq[-2])
    return seq


def _fib_caps(lo, ub):
    caps = []
    for f in _fib_sequence(ub):
        if f > lo:
            caps.append(f)
        if f >= ub:
            break
    return caps


class _Rec:
    __slots__ = ("addr", "cap", "state", "stamp", "chunk")

    def __init__(self, addr, cap, state, stamp, chunk):
        self.addr = addr
        self.cap = cap
        self.state = state  # "live" | "free" | "waste"
        self.stamp = stamp  # free-insertion order
        self.chunk = chunk  # (origin, cap) of the originating system request


class _OracleAllocator:
    def __init__(self, spec, lo, observed, page_size):
        self.spec = spec
        self.lo = lo
        self.ub = spec.upper_bound
        self.klass = spec.klass
        self.is_buddy = spec.klass in _BUDDIES
        self.is_sss = spec.klass is AllocatorClass.SIMPLE_SEGREGATED_STORAGE
        self.page_size = page_size
        if spec.klass is AllocatorClass.SEGREGATED_FREE_LIST:
            self.caps = [self.ub]
        elif spec.klass is AllocatorClass.BUDDY_BINARY:
            self.caps = _pow2_caps(lo, self.ub)
        elif spec.klass is AllocatorClass.BUDDY_FIBONACCI:
            self.caps = _fib_caps(lo, self.ub)
        else:
            pool = spec.size_classes if spec.size_classes is not None else observed
            self.caps = sorted({s for s in pool if lo < s <= self.ub})
        self.records: list[_Rec] = []
        self.tip = 0

    def rounds(self):
        return self.klass is not AllocatorClass.SEGREGATED_FREE_LIST

    def target_for(self, size):
        if not self.rounds():
            return size
        for c in self.caps:
            if c >= size:
                return c
        raise AssertionError(f"no class for size {size}")

    def home_class(self, cap):
        # largest class capacity <= cap; fragments park in the lowest class
        home = self.caps[0]
        for c in self.caps:
            if c <= cap:
                home = c
            else:
                break
        return home

    def fib_halves(self, cap):
        seq = _fib_sequence(cap)
        i = seq.index(cap)
        if i >= 2:
            return seq[i - 1], seq[i - 2]
        assert cap == 2
        return 1, 1

    def canonical_halves(self, cap):
        if self.klass is AllocatorClass.BUDDY_BINARY:
            return cap // 2, cap // 2
        return self.fib_halves(cap)

    def buddy_of(self, rec):
        """Sibling and parent via the canonical split tree of the chunk."""
        origin, chunk_cap = rec.chunk
        rel = rec.addr - origin
        node_off, node_cap = 0, chunk_cap
        parent = None
        sibling = None
        while (node_off, node_cap) != (rel, rec.cap):
            if node_cap <= rec.cap:
                return None  # not a node of this chunk's tree
            left, right = self.canonical_halves(node_cap)
            parent = (node_off, node_cap)
            if rel < node_off + left:
                sibling = (node_off + left, right)
                node_off, node_cap = node_off, left
            else:
                sibling = (node_off, left)
                node_off, node_cap = node_off + left, right
        if parent is None:
            return None
        return ((origin + sibling[0], sibling[1]),
                (origin + parent[0], parent[1]))


class ByteMapOracle:
    """Replays a report against a spec; tracks peak outstanding bytes."""

    def __init__(self, spec, observed, page_size=4096):
        self.allocators = []
        lo = 0
        for aspec in spec.allocators:
            self.allocators.append(_OracleAllocator(aspec, lo, observed, page_size))
            lo = aspec.upper_bound
        self.outstanding = 0
        self.peak = 0
        self.live: dict[int, tuple[int, _Rec]] = {}
        self.stamp = 0

    def _next_stamp(self):
        self.stamp += 1
        return self.stamp

    def _grow(self, n):
        self.outstanding += n
        self.peak = max(self.peak, self.outstanding)

    def _free_in_class(self, a, class_cap):
        recs = [r for r in a.records if r.state == "free" and a.home_class(r.cap) == class_cap]
        recs.sort(key=lambda r: r.stamp)
        if a.spec.policy is AllocationPolicy.LIFO:
            recs.reverse()
        return recs

    def _pick(self, a, recs, target):
        mech = a.spec.mechanism
        if mech is AllocationMechanism.FIRST:
            for r in recs:
                if r.cap >= target:
                    return r
        elif mech is AllocationMechanism.EXACT:
            for r in recs:
                if r.cap == target:
                    return r
        else:
            best = None
            for r in recs:
                if r.cap >= target and (best is None or r.cap < best.cap):
                    best = r
            return best
        return None

    def allocate(self, size, key):
        ai = next(i for i, a in enumerate(self.allocators) if a.lo < size <= a.ub)
        a = self.allocators[ai]
        target = a.target_for(size)

        rec = self._pick(a, self._free_in_class(a, a.home_class(target)), target)
        if rec is None and a.spec.split and not a.is_sss and len(a.caps) > 1:
            start = a.caps.index(a.home_class(target)) + 1
            for cj in a.caps[start:]:
                donor = self._pick(a, self._free_in_class(a, cj), cj)
                if donor is not None:
                    rec = self._split_down(a, donor, target)
                    break
        if rec is not None and a.spec.split and not a.is_buddy and rec.cap > target:
            rec = self._cut(a, rec, target)
        if rec is None:
            rec = self._fresh(a, target)
        rec.state = "live"
        self.live[key] = (ai, rec)

    def _cut(self, a, rec, target):
        rest = _Rec(rec.addr + target, rec.cap - target, "free",
                    self._next_stamp(), rec.chunk)
        a.records.append(rest)
        rec.cap = target
        return rec

    def _split_down(self, a, donor, target):
        if not a.is_buddy:
            return self._cut(a, donor, target)
        while donor.cap > target:
            left, right = a.canonical_halves(donor.cap)
            rest = _Rec(donor.addr + left, right, "free",
                        self._next_stamp(), donor.chunk)
            a.records.append(rest)
            donor.cap = left
        return donor

    def _fresh(self, a, target):
        if a.is_sss:
            pages = -(-target // a.page_size)
            nbytes = pages * a.page_size
            origin = a.tip
            a.tip += nbytes
            self._grow(nbytes)
            nslots = nbytes // target
            first = _Rec(origin, target, "free", self._next_stamp(), (origin, nbytes))
            a.records.append(first)
            for i in range(1, nslots):
                a.records.append(_Rec(origin + i * target, target, "free",
                                      self._next_stamp(), (origin, nbytes)))
            waste = nbytes - nslots * target
            if waste:
                a.records.append(_Rec(origin + nslots * target, waste, "waste",
                                      self._next_stamp(), (origin, nbytes)))
            return first
        addr = a.tip
        a.tip += target
        self._grow(target)
        rec = _Rec(addr, target, "free", self._next_stamp(), (addr, target))
        a.records.append(rec)
        return rec

    def free(self, key):
        ai, rec = self.live.pop(key)
        a = self.allocators[ai]
        if a.spec.release:
            a.records.remove(rec)
            self.outstanding -= rec.cap
            return
        rec.state = "free"
        rec.stamp = self._next_stamp()
        if not a.spec.coalesce or a.is_sss:
            return
        if a.is_buddy:
            while True:
                hit = a.buddy_of(rec)
                if hit is None:
                    break
                (sib_addr, sib_cap), (p_addr, p_cap) = hit
                sib = next((r for r in a.records
                            if r.state == "free" and r.addr == sib_addr
                            and r.cap == sib_cap), None)
                if sib is None or sib is rec:
                    break
                a.records.remove(sib)
                rec.addr, rec.cap = p_addr, p_cap
                rec.stamp = self._next_stamp()
        else:
            merged = True
            while merged:
                merged = False
                for other in a.records:
                    if other is rec or other.state != "free":
                        continue
                    if other.addr + other.cap == rec.addr:
                        rec.addr = other.addr
                        rec.cap += other.cap
                    elif rec.addr + rec.cap == other.addr:
                        rec.cap += other.cap
                    else:
                        continue
                    a.records.remove(other)
                    rec.stamp = self._next_stamp()
                    merged = True
                    break

    def check_conservation(self):
        total = sum(r.cap for a in self.allocators for r in a.records)
        assert total == self.outstanding, (total, self.outstanding)

    def run(self, report):
        for e in report.events:
            if e.kind is EventKind.ALLOC:
                self.allocate(e.size, e.address)
            else:
                self.free(e.address)
            self.check_conservation()
        return self.peak
