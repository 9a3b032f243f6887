"""Layer-to-core allocation with a seeded genetic algorithm.

Each gene assigns one layer to a resource that supports its kind; fitness is
obtained by running the full scheduler on the candidate allocation, so the
allocation loop and the ordering loop iterate together.  Selection is a
size-2 tournament, crossover is single point over the layer-ordered gene
vector, and mutation re-draws a gene uniformly among supporting resources.

Replacement uses restricted tournament crowding: a child replaces the most
similar member of a sampled window when it is no worse.  Allocation
landscapes have neutral plateaus (moving a consumer without its producer
often costs exactly what it saves), and crowding lets the population drift
across them instead of collapsing onto one basin.
"""

from __future__ import annotations

import io
import logging
import random
from dataclasses import dataclass

from .depgraph import NodeGraph
from .hwmodel import HardwareSpec
from .scheduler import Allocation, SchedulePolicy, ScheduleResult, schedule

logger = logging.getLogger(__name__)


@dataclass
class GAConfig:
    population: int = 32
    generations: int = 50
    mutation_rate: float = 0.1
    crossover_rate: float = 0.9
    seed: int = 0
    objective: str = "latency"  # latency | energy | peak_memory | weighted
    lam: float = 0.5

    def __post_init__(self) -> None:
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must be in [0, 1]")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must be in [0, 1]")
        if self.objective not in ("latency", "energy", "peak_memory", "weighted"):
            raise ValueError(f"unknown objective {self.objective!r}")


def evaluate_allocation(
    a: Allocation,
    ng: NodeGraph,
    hw: HardwareSpec,
    policy: SchedulePolicy | None = None,
) -> tuple[float, float, int]:
    """Schedule under an allocation and report (makespan, energy, peak memory).

    Peak memory is the worst per-core peak: capacity binds per core, so an
    allocation that balances latency but concentrates live data on one core
    scores accordingly.
    """
    policy = policy or SchedulePolicy(mode="layer_by_layer", priority="latency")
    result = schedule(ng, a, hw, policy)
    peak = max(result.trace.per_core_peak.values(), default=0)
    return result.makespan, result.energy, peak


def _fitness(
    metrics: tuple[float, float, int],
    cfg: GAConfig,
    scales: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> float:
    mk, energy, peak = metrics
    if cfg.objective == "latency":
        return mk
    if cfg.objective == "energy":
        return energy
    if cfg.objective == "peak_memory":
        return float(peak)
    # weighted: latency against the mean of the cost terms, all normalized so
    # no unit dominates
    mk_scale, energy_scale, peak_scale = scales
    cost = 0.5 * (energy / energy_scale + peak / peak_scale)
    return cfg.lam * mk / mk_scale + (1.0 - cfg.lam) * cost


@dataclass
class GAOutcome:
    allocation: Allocation
    metrics: tuple[float, float, int]
    fitness: float
    best_per_generation: list[float]
    evaluations: int

    def fitness_log_csv(self) -> str:
        buf = io.StringIO()
        buf.write("generation,best_fitness\n")
        for gen, fit in enumerate(self.best_per_generation):
            buf.write(f"{gen},{fit}\n")
        return buf.getvalue()


def genetic_search(
    ng: NodeGraph,
    hw: HardwareSpec,
    cfg: GAConfig,
    policy: SchedulePolicy | None = None,
) -> GAOutcome:
    """Search layer-to-resource allocations, minimizing the configured objective.

    Reproducible for a fixed seed; elitism keeps the best-ever individual in
    the population, so the best fitness never regresses across generations.
    """
    g = ng.graph
    layers = [layer.id for layer in g.layers]
    supporters = {layer.id: hw.supporters(layer.kind) for layer in g.layers}
    for lid, opts in supporters.items():
        if not opts:
            raise ValueError(f"no resource supports layer {lid}")

    rng = random.Random(cfg.seed)
    cache: dict[tuple[str, ...], tuple[float, float, int]] = {}
    evaluations = 0

    def repair(genes: list[str]) -> list[str]:
        fixed = list(genes)
        resources = hw.resource_ids()
        for i, lid in enumerate(layers):
            opts = supporters[lid]
            if fixed[i] not in opts:
                # nearest supporting resource by id order
                pos = resources.index(fixed[i]) if fixed[i] in resources else 0
                fixed[i] = min(
                    opts, key=lambda r: (abs(resources.index(r) - pos), r)
                )
        return fixed

    def evaluate(genes: tuple[str, ...]) -> tuple[float, float, int]:
        nonlocal evaluations
        if genes not in cache:
            alloc = dict(zip(layers, genes))
            cache[genes] = evaluate_allocation(alloc, ng, hw, policy)
        evaluations += 1
        return cache[genes]

    def random_individual() -> tuple[str, ...]:
        return tuple(rng.choice(supporters[lid]) for lid in layers)

    population = [random_individual() for _ in range(cfg.population)]
    first = [evaluate(ind) for ind in population]
    scales = (
        max(1.0, min(m[0] for m in first)),
        max(1.0, min(m[1] for m in first)),
        max(1.0, min(float(m[2]) for m in first)),
    )
    scored = [(_fitness(m, cfg, scales), ind) for m, ind in zip(first, population)]
    best_fit, best_ind = min(scored, key=lambda x: (x[0], x[1]))
    log = [best_fit]

    fitness_of: list[float] = [f for f, _ in scored]
    pool: list[tuple[str, ...]] = list(population)
    window = min(cfg.population, 16)

    def tournament() -> tuple[str, ...]:
        a = rng.randrange(cfg.population)
        b = rng.randrange(cfg.population)
        return pool[b] if fitness_of[b] < fitness_of[a] else pool[a]

    def hamming(a: tuple[str, ...], b: tuple[str, ...]) -> int:
        return sum(1 for x, y in zip(a, b) if x != y)

    for _ in range(cfg.generations):
        for _ in range(cfg.population):
            p1, p2 = tournament(), tournament()
            if rng.random() < cfg.crossover_rate and len(layers) > 1:
                cut = rng.randrange(1, len(layers))
                child = list(p1[:cut]) + list(p2[cut:])
            else:
                child = list(p1)
            for i, lid in enumerate(layers):
                if rng.random() < cfg.mutation_rate:
                    child[i] = rng.choice(supporters[lid])
            genes = tuple(repair(child))
            fit = _fitness(evaluate(genes), cfg, scales)
            # restricted tournament replacement: contend with the most
            # similar member of a random window; ties replace, so the
            # population drifts across neutral plateaus
            slots = rng.sample(range(cfg.population), window)
            slot = min(slots, key=lambda j: (hamming(genes, pool[j]), j))
            if fit <= fitness_of[slot]:
                pool[slot] = genes
                fitness_of[slot] = fit
            if fit < best_fit or (fit == best_fit and genes < best_ind):
                best_fit, best_ind = fit, genes
        log.append(best_fit)

    metrics = cache[best_ind]
    return GAOutcome(
        allocation=dict(zip(layers, best_ind)),
        metrics=metrics,
        fitness=best_fit,
        best_per_generation=log,
        evaluations=evaluations,
    )


def random_baseline(
    ng: NodeGraph,
    hw: HardwareSpec,
    cfg: GAConfig,
    budget: int,
    policy: SchedulePolicy | None = None,
) -> float:
    """Best fitness among ``budget`` random allocations (comparison baseline)."""
    g = ng.graph
    layers = [layer.id for layer in g.layers]
    supporters = {layer.id: hw.supporters(layer.kind) for layer in g.layers}
    rng = random.Random(cfg.seed + 1)
    best = float("inf")
    cache: dict[tuple[str, ...], float] = {}
    for _ in range(budget):
        genes = tuple(rng.choice(supporters[lid]) for lid in layers)
        if genes not in cache:
            alloc = dict(zip(layers, genes))
            cache[genes] = _fitness(evaluate_allocation(alloc, ng, hw, policy), cfg)
        best = min(best, cache[genes])
    return best
