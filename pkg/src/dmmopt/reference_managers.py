"""Preset builders for the five general-purpose managers (kng, lea, fib,
s10, exa).

The presets are behavioral sketches of the originals, not bit-faithful
reimplementations; data-structure, mechanism, and policy fields are the
cheapest faithful reading and are fixed here so experiments reproduce.
"""
from __future__ import annotations

from .heap_sim import (
    AllocationMechanism,
    AllocationPolicy,
    AllocatorClass,
    AllocatorSpec,
    DataStructureKind,
    DmmSpec,
)
from .trace import ProfilingReport

LEA_SMALL_BOUND = 64
LEA_MMAP_BOUND = 131072


def next_power_of_two(n: int) -> int:
    return 1 << max(n - 1, 0).bit_length() if n > 1 else 1


def kingsley(max_size: int) -> DmmSpec:
    """Power-of-two buddy, no splitting or coalescing: fast, wasteful."""
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    return DmmSpec((
        AllocatorSpec(
            klass=AllocatorClass.BUDDY_BINARY,
            split=False,
            coalesce=False,
            upper_bound=next_power_of_two(max_size),
            ds=DataStructureKind.SLL,
            mechanism=AllocationMechanism.FIRST,
            policy=AllocationPolicy.LIFO,
        ),
    ))


def lea(max_size: int) -> DmmSpec:
    """Approximate best fit: exact 8-byte-multiple lists below 64 bytes,
    a coalescing best-fit range up to 128 KiB, mmap-modeled large objects
    above (frees shrink the pool)."""
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    small = AllocatorSpec(
        klass=AllocatorClass.EXACT_SEGREGATED_FIT,
        split=False,
        coalesce=False,
        upper_bound=LEA_SMALL_BOUND,
        ds=DataStructureKind.SLL,
        mechanism=AllocationMechanism.EXACT,
        policy=AllocationPolicy.FIFO,
        size_classes=tuple(range(8, LEA_SMALL_BOUND + 1, 8)),
    )
    if max_size <= LEA_SMALL_BOUND:
        return DmmSpec((small,))
    medium = AllocatorSpec(
        klass=AllocatorClass.SEGREGATED_FREE_LIST,
        split=True,
        coalesce=True,
        upper_bound=LEA_MMAP_BOUND,
        ds=DataStructureKind.BTREE,
        mechanism=AllocationMechanism.BEST,
        policy=AllocationPolicy.FIFO,
    )
    if max_size <= LEA_MMAP_BOUND:
        return DmmSpec((small, medium))
    large = AllocatorSpec(
        klass=AllocatorClass.SEGREGATED_FREE_LIST,
        split=False,
        coalesce=False,
        upper_bound=max_size,
        ds=DataStructureKind.SLL,
        mechanism=AllocationMechanism.BEST,
        policy=AllocationPolicy.FIFO,
        release=True,
    )
    return DmmSpec((small, medium, large))


def fib_buddy(max_size: int) -> DmmSpec:
    """One Fibonacci buddy over the whole range with split and coalesce."""
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    return DmmSpec((
        AllocatorSpec(
            klass=AllocatorClass.BUDDY_FIBONACCI,
            split=True,
            coalesce=True,
            upper_bound=max_size,
            ds=DataStructureKind.SLL,
            mechanism=AllocationMechanism.FIRST,
            policy=AllocationPolicy.FIFO,
        ),
    ))


def segregated10(max_size: int) -> DmmSpec:
    """Ten segregated free lists over geometrically split ranges.

    For tiny ranges fewer than ten strictly increasing integer bounds
    exist, so the count degrades gracefully.
    """
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    n = min(10, max_size)
    bounds: list[int] = []
    for i in range(1, n + 1):
        b = round(max_size ** (i / n))
        if bounds:
            b = max(b, bounds[-1] + 1)
        bounds.append(min(b, max_size))
    bounds[-1] = max_size
    # dedup in case of clamping near the top
    uniq = sorted(set(bounds))
    return DmmSpec(tuple(
        AllocatorSpec(
            klass=AllocatorClass.SEGREGATED_FREE_LIST,
            split=False,
            coalesce=False,
            upper_bound=b,
            ds=DataStructureKind.SLL,
            mechanism=AllocationMechanism.FIRST,
            policy=AllocationPolicy.FIFO,
        )
        for b in uniq
    ))


def exact_segfit(report: ProfilingReport) -> DmmSpec:
    """One exact class per observed size."""
    if not report.distinct_sizes:
        raise ValueError("report has no allocations")
    return DmmSpec((
        AllocatorSpec(
            klass=AllocatorClass.EXACT_SEGREGATED_FIT,
            split=False,
            coalesce=False,
            upper_bound=report.max_size,
            ds=DataStructureKind.SLL,
            mechanism=AllocationMechanism.EXACT,
            policy=AllocationPolicy.FIFO,
        ),
    ))


def preset(name: str, report: ProfilingReport) -> DmmSpec:
    """Build a preset by its CLI identifier: kng|lea|fib|s10|exa."""
    if not report.distinct_sizes:
        raise ValueError("report has no allocations")
    max_size = report.max_size
    builders = {
        "kng": lambda: kingsley(max_size),
        "lea": lambda: lea(max_size),
        "fib": lambda: fib_buddy(max_size),
        "s10": lambda: segregated10(max_size),
        "exa": lambda: exact_segfit(report),
    }
    try:
        return builders[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; expected kng|lea|fib|s10|exa") from None


PRESET_NAMES = ("kng", "lea", "fib", "s10", "exa")
