"""BNF grammar generation, parsing, and genome decoding.

The generated grammar always has the same twelve rules; only the size
rules vary with the profiled application. Nonterminal symbols keep their
angle brackets (``<Size>``); anything else is a terminal.

Decoding reads one codon per selector rule, i.e. per rule whose
productions are all single symbols, even when there is only one option
(``401 mod 1``-style reads included). The two sequence rules that lay out
an allocator's fields expand without consuming, which makes a complete
decode of k allocators cost exactly ``1 + 8k`` codons.

Note the alternatives of ``<Allocators>`` are ordered terminator first:
an even codon ends the allocator chain and an odd codon extends it. This
is the order the worked decoding of the reference genome requires.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .heap_sim import (
    AllocationMechanism,
    AllocationPolicy,
    AllocatorClass,
    AllocatorSpec,
    DataStructureKind,
    DmmSpec,
)
from .trace import EmptyTraceError, ProfilingReport

Genome = tuple[int, ...]

_EXPANSION_LIMIT = 100_000


class GrammarError(ValueError):
    """Base class for grammar failures."""


class BnfSyntaxError(GrammarError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class UndefinedNonterminalError(GrammarError):
    def __init__(self, name: str):
        super().__init__(f"nonterminal {name} is referenced but never defined")
        self.name = name


@dataclass(frozen=True)
class Grammar:
    """Ordered production rules; rule and production order drive decoding."""

    rules: tuple[tuple[str, tuple[tuple[str, ...], ...]], ...]
    start: str

    @cached_property
    def rule_map(self) -> dict[str, tuple[tuple[str, ...], ...]]:
        return dict(self.rules)

    @cached_property
    def nonterminals(self) -> tuple[str, ...]:
        return tuple(head for head, _ in self.rules)

    @cached_property
    def terminals(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        heads = set(self.rule_map)
        for _, prods in self.rules:
            for prod in prods:
                for sym in prod:
                    if sym not in heads:
                        seen.setdefault(sym)
        return tuple(seen)

    @property
    def codon_domain(self) -> int:
        """Maximum production count across rules; codons live in [0, domain)."""
        return max(len(prods) for _, prods in self.rules)


def generate_grammar(report: ProfilingReport) -> Grammar:
    """Specialize the grammar skeleton to a profiling report.

    ``<Size>`` lists all distinct sizes except the maximum; ``<MaxSize>``
    holds the maximum. A single-size trace duplicates its size into both
    so neither rule is ever empty.
    """
    sizes = report.distinct_sizes
    if not sizes:
        raise EmptyTraceError("cannot generate a grammar from a trace with no allocations")
    if len(sizes) == 1:
        size_options = sizes
    else:
        size_options = sizes[:-1]
    max_size = sizes[-1]

    fields = (
        "<AllocatorClass>", "<AllowSplitting>", "<AllowCoalescing>",
    )
    tail = ("<DataStructure>", "<AllocationMechanism>", "<AllocationPolicy>")
    rules = (
        ("<DynamicMemoryManager>", (("<Allocators>",),)),
        ("<Allocators>", (("<AllocatorMaxSize>",), ("<AllocatorSize>",))),
        ("<AllocatorSize>", (fields + ("<Size>",) + tail + ("<Allocators>",),)),
        ("<AllocatorMaxSize>", (fields + ("<MaxSize>",) + tail,)),
        ("<AllocatorClass>", tuple((c.value,) for c in AllocatorClass)),
        ("<Size>", tuple((str(s),) for s in size_options)),
        ("<MaxSize>", ((str(max_size),),)),
        ("<AllowSplitting>", (("true",), ("false",))),
        ("<AllowCoalescing>", (("true",), ("false",))),
        ("<DataStructure>", tuple((d.value,) for d in DataStructureKind)),
        ("<AllocationMechanism>", tuple((m.value,) for m in AllocationMechanism)),
        ("<AllocationPolicy>", tuple((p.value,) for p in AllocationPolicy)),
    )
    return Grammar(rules=rules, start="<DynamicMemoryManager>")


def serialize_bnf(grammar: Grammar) -> str:
    lines = []
    for head, prods in grammar.rules:
        rendered = " | ".join(" ".join(prod) for prod in prods)
        lines.append(f"{head} ::= {rendered}\n")
    return "".join(lines)


def parse_bnf(text: str) -> Grammar:
    """Parse ``<NT> ::= prodA | prodB`` lines into a :class:`Grammar`.

    Lines without ``::=`` continue the previous rule, matching the
    wrapped layout of generated grammar files.
    """
    rules: list[tuple[str, list[tuple[str, ...]]]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if "::=" in line:
            head, _, rhs = line.partition("::=")
            head = head.strip()
            if not (head.startswith("<") and head.endswith(">")):
                raise BnfSyntaxError(line_no, f"rule head {head!r} is not a <nonterminal>")
            if any(h == head for h, _ in rules):
                raise BnfSyntaxError(line_no, f"duplicate rule for {head}")
            rules.append((head, []))
        else:
            if not rules:
                raise BnfSyntaxError(line_no, "continuation line before any rule")
            rhs = line
        head, prods = rules[-1]
        for chunk in rhs.split("|"):
            symbols = tuple(chunk.split())
            if symbols:
                prods.append(symbols)
    if not rules:
        raise BnfSyntaxError(1, "no rules found")
    heads = {h for h, _ in rules}
    for head, prods in rules:
        if not prods:
            raise BnfSyntaxError(1, f"rule {head} has no productions")
        for prod in prods:
            for sym in prod:
                if sym.startswith("<") and sym not in heads:
                    raise UndefinedNonterminalError(sym)
    return Grammar(
        rules=tuple((h, tuple(p)) for h, p in rules),
        start=rules[0][0],
    )


@dataclass(frozen=True)
class Decoded:
    spec: DmmSpec
    codons_consumed: int
    wraps_used: int


@dataclass(frozen=True)
class Invalid:
    reason: str


DecodeOutcome = Union[Decoded, Invalid]


class _OutOfCodons(Exception):
    pass


def _derive(genome: Sequence[int], grammar: Grammar, max_wraps: int
            ) -> tuple[list[str], int, int]:
    """Leftmost derivation; returns (terminals, codons consumed, wraps)."""
    if not genome:
        raise _OutOfCodons
    rule_map = grammar.rule_map
    n = len(genome)
    pos = 0
    wraps = 0
    consumed = 0
    stack = [grammar.start]
    out: list[str] = []
    expansions = 0
    while stack:
        sym = stack.pop()
        prods = rule_map.get(sym)
        if prods is None:
            out.append(sym)
            continue
        expansions += 1
        if expansions > _EXPANSION_LIMIT:
            raise _OutOfCodons
        if len(prods) > 1 or all(len(p) == 1 for p in prods):
            if pos == n:
                if wraps == max_wraps:
                    raise _OutOfCodons
                wraps += 1
                pos = 0
            codon = genome[pos]
            pos += 1
            consumed += 1
            chosen = prods[codon % len(prods)]
        else:
            chosen = prods[0]
        stack.extend(reversed(chosen))
    return out, consumed, wraps


def _assemble(terminals: list[str]) -> DmmSpec:
    if not terminals or len(terminals) % 7 != 0:
        raise ValueError(f"terminal stream of length {len(terminals)} is not a DMM")
    allocators = []
    for i in range(0, len(terminals), 7):
        klass, split, coalesce, bound, ds, mech, policy = terminals[i:i + 7]
        allocators.append(AllocatorSpec(
            klass=AllocatorClass(klass),
            split=split == "true",
            coalesce=coalesce == "true",
            upper_bound=int(bound),
            ds=DataStructureKind(ds),
            mechanism=AllocationMechanism(mech),
            policy=AllocationPolicy(policy),
        ))
    allocators.sort(key=lambda a: a.upper_bound)
    bounds = [a.upper_bound for a in allocators]
    if len(set(bounds)) != len(bounds):
        raise ValueError(f"duplicate upper bounds {bounds}")
    return DmmSpec(tuple(allocators))


def decode(genome: Sequence[int], grammar: Grammar, max_wraps: int = 3) -> DecodeOutcome:
    """Map a codon string to a DMM spec, or ``Invalid``.

    Running out of codons past the wrap limit, a malformed phenotype, and
    duplicate upper bounds after the ascending normalization all yield
    ``Invalid``; duplicates are rejected rather than merged because a
    silent merge would change phenotype semantics invisibly.
    """
    try:
        terminals, consumed, wraps = _derive(genome, grammar, max_wraps)
    except _OutOfCodons:
        return Invalid("non-terminals remain after the wrap limit")
    try:
        spec = _assemble(terminals)
    except ValueError as exc:
        return Invalid(str(exc))
    return Decoded(spec=spec, codons_consumed=consumed, wraps_used=wraps)


def random_genome(rng: np.random.Generator, length_range: tuple[int, int],
                  codon_domain: int) -> Genome:
    """Uniform codons with uniform length in the inclusive range."""
    lo, hi = length_range
    if not (1 <= lo <= hi):
        raise ValueError(f"invalid length range {length_range}")
    if codon_domain < 1:
        raise ValueError("codon_domain must be >= 1")
    length = int(rng.integers(lo, hi + 1))
    return tuple(int(c) for c in rng.integers(0, codon_domain, size=length))
