"""Grammatical-evolution search over DMM specs.

Fitness is the weighted normalized sum F = 0.5*T/T_kng + 0.5*M/M_lea,
where T counts simulated time units and M is the pool high-water mark;
the normalizers come from one run each of the Kingsley and Lea presets
on the same trace.

Reproducibility: one PCG64 stream seeded from (seed, "init") draws the
initial population, and one stream per generation seeded from
(seed, "gen", g) drives selection and variation. Fitness evaluation is
pure, so results are independent of evaluation scheduling; the
DMM_EVOLVE_THREADS cap only affects wall-clock time.
"""
from __future__ import annotations

import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import heap_sim
from .grammar import Decoded, Genome, Grammar, decode, random_genome
from .heap_sim import DmmSpec, EmptyRangeError, Metrics, OversizedRequestError, simulate
from .reference_managers import kingsley, lea
from .trace import EmptyTraceError, ProfilingReport

WORST_FITNESS = sys.float_info.max


@dataclass(frozen=True)
class GEAConfig:
    population_size: int = 100
    elite_size: int = 10
    generations: int = 250
    tournament_size: int = 2
    crossover_probability: float = 0.80
    mutation_probability: float = 0.02
    max_wraps: int = 3
    genome_length_range: tuple[int, int] = (20, 60)
    codon_domain: Optional[int] = None  # default: the grammar's maximum option count
    rng_seed: int = 0
    target_fitness: Optional[float] = None  # optional early stop, off by default

    def __post_init__(self):
        if not 0 < self.elite_size <= self.population_size:
            raise ValueError("need 0 < elite_size <= population_size")
        if self.generations < 0 or self.tournament_size < 1:
            raise ValueError("generations must be >= 0 and tournament_size >= 1")
        for p in (self.crossover_probability, self.mutation_probability):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        lo, hi = self.genome_length_range
        if not 1 <= lo <= hi:
            raise ValueError("invalid genome_length_range")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "elite_size": self.elite_size,
            "generations": self.generations,
            "tournament_size": self.tournament_size,
            "crossover_probability": self.crossover_probability,
            "mutation_probability": self.mutation_probability,
            "max_wraps": self.max_wraps,
            "genome_length_range": list(self.genome_length_range),
            "codon_domain": self.codon_domain,
            "rng_seed": self.rng_seed,
            "target_fitness": self.target_fitness,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GEAConfig":
        kwargs = dict(d)
        if "genome_length_range" in kwargs:
            kwargs["genome_length_range"] = tuple(kwargs["genome_length_range"])
        return cls(**kwargs)


@dataclass(frozen=True)
class FitnessContext:
    """Normalizers for the weighted fitness: Kingsley time, Lea memory."""

    t_kng: int
    m_lea: int

    def __post_init__(self):
        if self.t_kng <= 0 or self.m_lea <= 0:
            raise ValueError("normalizers must be positive")


@dataclass(frozen=True)
class Individual:
    genome: Genome
    fitness: float
    spec: Optional[DmmSpec] = None  # None for invalid individuals


@dataclass
class EvolveResult:
    best: Individual
    history: list[tuple[int, float, float]]  # (generation, best, mean)
    evaluations: int
    distinct_simulations: int

    def history_csv(self) -> str:
        rows = ["generation,best,mean\n"]
        for g, b, m in self.history:
            rows.append(f"{g},{b!r},{m!r}\n")
        return "".join(rows)


def fitness(metrics: Metrics, ctx: FitnessContext) -> float:
    return 0.5 * metrics.time_units / ctx.t_kng + 0.5 * metrics.peak_bytes / ctx.m_lea


def normalize(report: ProfilingReport, *,
              costs: heap_sim.CostModel = heap_sim.DEFAULT_COSTS,
              page_size: int = heap_sim.DEFAULT_PAGE_SIZE) -> FitnessContext:
    """Simulate the Kingsley and Lea presets once to anchor the fitness."""
    if not report.distinct_sizes:
        raise EmptyTraceError("cannot normalize an empty trace")
    t = simulate(report, kingsley(report.max_size), costs=costs, page_size=page_size)
    m = simulate(report, lea(report.max_size), costs=costs, page_size=page_size)
    return FitnessContext(t_kng=t.time_units, m_lea=m.peak_bytes)


def _threads_from_env() -> int:
    try:
        return max(1, int(os.environ.get("DMM_EVOLVE_THREADS", "1")))
    except ValueError:
        return 1


class _Evaluator:
    """Decode + simulate with memoization by decoded-spec identity.

    Identical phenotypes are common once the population converges, so one
    simulation per distinct spec saves most of the run time.
    """

    def __init__(self, report: ProfilingReport, grammar: Grammar, ctx: FitnessContext,
                 max_wraps: int, costs: heap_sim.CostModel, page_size: int,
                 threads: Optional[int]):
        self.report = report
        self.grammar = grammar
        self.ctx = ctx
        self.max_wraps = max_wraps
        self.costs = costs
        self.page_size = page_size
        self.threads = threads if threads is not None else _threads_from_env()
        self.cache: dict[DmmSpec, float] = {}
        self.evaluations = 0

    def _simulate_fitness(self, spec: DmmSpec) -> float:
        try:
            metrics = simulate(self.report, spec, costs=self.costs,
                               page_size=self.page_size)
        except (EmptyRangeError, OversizedRequestError):
            # Possible only when the grammar does not match the trace;
            # treated like an invalid phenotype.
            return WORST_FITNESS
        return fitness(metrics, self.ctx)

    def evaluate(self, population: Sequence[Genome]) -> list[Individual]:
        self.evaluations += len(population)
        outcomes = [decode(g, self.grammar, self.max_wraps) for g in population]
        pending: list[DmmSpec] = []
        seen = set()
        for o in outcomes:
            if isinstance(o, Decoded) and o.spec not in self.cache and o.spec not in seen:
                pending.append(o.spec)
                seen.add(o.spec)
        if pending:
            if self.threads > 1:
                with ThreadPoolExecutor(max_workers=self.threads) as pool:
                    results = list(pool.map(self._simulate_fitness, pending))
            else:
                results = [self._simulate_fitness(s) for s in pending]
            self.cache.update(zip(pending, results))
        out = []
        for genome, o in zip(population, outcomes):
            if isinstance(o, Decoded):
                out.append(Individual(genome, self.cache[o.spec], o.spec))
            else:
                out.append(Individual(genome, WORST_FITNESS, None))
        return out


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed,) + key)))


def _select_elite(scored: Sequence[Individual], elite_size: int) -> list[int]:
    """Indices of the elite: best first, ties toward the earlier index.

    Invalid individuals never ride along as elite; a fully invalid
    population keeps its least-bad genomes so the search can restart.
    """
    order = sorted(range(len(scored)), key=lambda i: (scored[i].fitness, i))
    elite = [i for i in order if scored[i].fitness < WORST_FITNESS]
    return elite[:elite_size] or order[:elite_size]


def _tournament(rng: np.random.Generator, scored: list[Individual], k: int) -> Individual:
    n = len(scored)
    best_idx = None
    for _ in range(k):
        i = int(rng.integers(0, n))
        if best_idx is None or scored[i].fitness < scored[best_idx].fitness or (
            scored[i].fitness == scored[best_idx].fitness and i < best_idx
        ):
            best_idx = i
    return scored[best_idx]


def _crossover(rng: np.random.Generator, a: Genome, b: Genome,
               probability: float) -> tuple[Genome, Genome]:
    # fixed one-point crossover: one cut index shared by both parents
    if rng.random() >= probability or min(len(a), len(b)) < 2:
        return a, b
    cut = int(rng.integers(1, min(len(a), len(b))))
    return a[:cut] + b[cut:], b[:cut] + a[cut:]


def _mutate(rng: np.random.Generator, genome: Genome, probability: float,
            codon_domain: int) -> Genome:
    if probability <= 0.0:
        return genome
    mask = rng.random(len(genome)) < probability
    if not mask.any():
        return genome
    fresh = rng.integers(0, codon_domain, size=len(genome))
    return tuple(int(f) if hit else g for g, f, hit in zip(genome, fresh, mask))


def evolve(report: ProfilingReport, grammar: Grammar, config: GEAConfig, *,
           costs: heap_sim.CostModel = heap_sim.DEFAULT_COSTS,
           page_size: int = heap_sim.DEFAULT_PAGE_SIZE,
           threads: Optional[int] = None,
           ctx: Optional[FitnessContext] = None,
           on_generation: Optional[Callable[[int, float, float], None]] = None,
           ) -> EvolveResult:
    """Generational GE search; returns the best-ever individual.

    Deterministic for a fixed config and seed regardless of the thread
    cap. Ties in tournaments and elite ordering break toward the earlier
    index.
    """
    if ctx is None:
        ctx = normalize(report, costs=costs, page_size=page_size)
    codon_domain = config.codon_domain or grammar.codon_domain
    evaluator = _Evaluator(report, grammar, ctx, config.max_wraps, costs,
                           page_size, threads)

    rng_init = _stream(config.rng_seed, 0)
    population = [
        random_genome(rng_init, config.genome_length_range, codon_domain)
        for _ in range(config.population_size)
    ]

    history: list[tuple[int, float, float]] = []
    best_ever: Optional[Individual] = None
    n = config.population_size

    def record(gen: int, scored: list[Individual]) -> None:
        nonlocal best_ever
        gen_best = min(scored, key=lambda ind: ind.fitness)
        if best_ever is None or gen_best.fitness < best_ever.fitness:
            best_ever = gen_best
        mean = math.fsum(ind.fitness / len(scored) for ind in scored)
        history.append((gen, gen_best.fitness, mean))
        if on_generation is not None:
            on_generation(gen, gen_best.fitness, mean)

    scored = evaluator.evaluate(population)
    record(0, scored)

    for gen in range(1, config.generations + 1):
        if config.target_fitness is not None and best_ever.fitness <= config.target_fitness:
            break
        rng = _stream(config.rng_seed, 1, gen)
        elite = _select_elite(scored, config.elite_size)
        next_pop: list[Genome] = [scored[i].genome for i in elite]
        while len(next_pop) < n:
            pa = _tournament(rng, scored, config.tournament_size)
            pb = _tournament(rng, scored, config.tournament_size)
            ca, cb = _crossover(rng, pa.genome, pb.genome, config.crossover_probability)
            ca = _mutate(rng, ca, config.mutation_probability, codon_domain)
            cb = _mutate(rng, cb, config.mutation_probability, codon_domain)
            next_pop.append(ca)
            if len(next_pop) < n:
                next_pop.append(cb)
        population = next_pop
        scored = evaluator.evaluate(population)
        record(gen, scored)

    return EvolveResult(
        best=best_ever,
        history=history,
        evaluations=evaluator.evaluations,
        distinct_simulations=len(evaluator.cache),
    )


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    fitness: float
    time_ratio: float
    memory_ratio: float
    time_units: int
    peak_bytes: int


@dataclass(frozen=True)
class Comparison:
    rows: tuple[ComparisonRow, ...]
    # improvements[i][j] = 100 * (F_i - F_j) / F_i, the improvement of j over i
    improvements: tuple[tuple[float, ...], ...]


def compare(report: ProfilingReport, named_specs: Sequence[tuple[str, DmmSpec]], *,
            costs: heap_sim.CostModel = heap_sim.DEFAULT_COSTS,
            page_size: int = heap_sim.DEFAULT_PAGE_SIZE,
            ctx: Optional[FitnessContext] = None) -> Comparison:
    """Normalized fitness table plus pairwise improvement percentages."""
    if ctx is None:
        ctx = normalize(report, costs=costs, page_size=page_size)
    rows = []
    for name, spec in named_specs:
        m = simulate(report, spec, costs=costs, page_size=page_size)
        rows.append(ComparisonRow(
            name=name,
            fitness=fitness(m, ctx),
            time_ratio=m.time_units / ctx.t_kng,
            memory_ratio=m.peak_bytes / ctx.m_lea,
            time_units=m.time_units,
            peak_bytes=m.peak_bytes,
        ))
    improvements = tuple(
        tuple(100.0 * (a.fitness - b.fitness) / a.fitness if a.fitness else 0.0
              for b in rows)
        for a in rows
    )
    return Comparison(rows=tuple(rows), improvements=improvements)
