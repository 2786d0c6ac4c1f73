"""Reference plan searchers.

Brute force enumerates the whole assignment space and is the optimality
oracle for everything else. Greedy fixes layers left to right with a
suffix-fill lookahead. The genetic search runs tournament selection with
one-point crossover, per-gene mutation, and single elitism. The first-layer
heuristic, homogeneous plans, and seeded random search round out the set.

All searchers score plans through :class:`~layersched.scoring.PlanScorer`,
so every returned cost is the provisioned monetary cost (or a penalty).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .costmodel import JobParams
from .domain import ModelGraph, ResourceCatalog, SchedulingPlan
from .errors import ConfigError, InfeasibleError, InvariantError, PlanValidationError
from .provisioner import ProvisionerConfig
from .scoring import PlanScorer, ScoredPlan

DEFAULT_ENUMERATION_CAP = 2**24


@dataclass(frozen=True)
class GeneticConfig:
    """Genetic-search knobs; ``mutation_rate=None`` means one over the layer count."""

    population: int = 64
    generations: int = 200
    crossover_rate: float = 0.8
    mutation_rate: float | None = None
    tournament_size: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise InvariantError("population must be >= 2")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise InvariantError("crossover_rate must be in [0, 1]")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise InvariantError("mutation_rate must be in [0, 1]")
        if self.tournament_size < 1:
            raise InvariantError("tournament_size must be >= 1")
        if self.generations < 0:
            raise InvariantError("generations must be >= 0")


def _better(candidate: ScoredPlan, incumbent: ScoredPlan | None) -> bool:
    """Strictly cheaper, or equally cheap with a lexicographically smaller plan."""
    if incumbent is None:
        return True
    if candidate.cost != incumbent.cost:
        return candidate.cost < incumbent.cost
    return candidate.plan.assignment < incumbent.plan.assignment


def brute_force(
    graph: ModelGraph,
    catalog: ResourceCatalog,
    params: JobParams,
    config: ProvisionerConfig = ProvisionerConfig(),
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
) -> ScoredPlan:
    """Enumerate all T^L assignments and return the cheapest feasible plan."""
    num_types = catalog.num_types
    num_layers = graph.num_layers
    total = num_types**num_layers
    if total > enumeration_cap:
        raise ConfigError(
            f"brute force would enumerate {total} plans "
            f"({num_types}^{num_layers}), cap is {enumeration_cap}"
        )
    scorer = PlanScorer(graph, catalog, params, config)
    best: ScoredPlan | None = None
    for assignment in itertools.product(range(num_types), repeat=num_layers):
        scored = scorer(SchedulingPlan(assignment))
        if scored.feasible and _better(scored, best):
            best = scored
    if best is None:
        raise InfeasibleError(f"no feasible plan among {total} enumerated")
    return ScoredPlan(best.plan, best.provisioning, best.cost, best.report, total)


def greedy(
    graph: ModelGraph,
    catalog: ResourceCatalog,
    params: JobParams,
    config: ProvisionerConfig = ProvisionerConfig(),
) -> ScoredPlan:
    """Fix layers in order, scoring each candidate with the suffix filled in.

    For layer l and candidate type t, the partial plan is completed by
    assigning t to every remaining layer, so the full cost model can score
    it. Deterministic; ties go to the lower type id.
    """
    num_types = catalog.num_types
    num_layers = graph.num_layers
    scorer = PlanScorer(graph, catalog, params, config)
    decided: list[int] = []
    for _ in range(num_layers):
        best_type = 0
        best: ScoredPlan | None = None
        for t in range(num_types):
            candidate = tuple(decided) + (t,) * (num_layers - len(decided))
            scored = scorer(SchedulingPlan(candidate))
            if best is None or scored.cost < best.cost:
                best = scored
                best_type = t
        decided.append(best_type)
    final = scorer(SchedulingPlan(tuple(decided)))
    return ScoredPlan(
        final.plan, final.provisioning, final.cost, final.report, scorer.evaluations
    )


def genetic(
    graph: ModelGraph,
    catalog: ResourceCatalog,
    params: JobParams,
    config: GeneticConfig = GeneticConfig(),
    provisioner_config: ProvisionerConfig = ProvisionerConfig(),
    seed_plans: Sequence[SchedulingPlan] = (),
) -> ScoredPlan:
    """Genetic search over assignments, reproducible from the seed.

    Fitness is negative cost (penalized when infeasible). One elite survives
    each generation unchanged; the best individual ever seen is returned.
    """
    num_types = catalog.num_types
    num_layers = graph.num_layers
    mutation_rate = (
        config.mutation_rate if config.mutation_rate is not None else 1.0 / num_layers
    )
    rng = np.random.default_rng(config.seed)
    scorer = PlanScorer(graph, catalog, params, provisioner_config)

    population: list[tuple[int, ...]] = [p.assignment for p in seed_plans][
        : config.population
    ]
    while len(population) < config.population:
        population.append(tuple(int(g) for g in rng.integers(0, num_types, num_layers)))

    best: ScoredPlan | None = None

    def evaluate_population(pop):
        nonlocal best
        scored = [scorer(SchedulingPlan(a)) for a in pop]
        for s in scored:
            if _better(s, best):
                best = s
        return scored

    scored = evaluate_population(population)
    for _ in range(config.generations):
        costs = np.array([s.cost for s in scored])
        elite = population[int(np.argmin(costs))]
        children = [elite]
        while len(children) < config.population:
            parents = []
            for _ in range(2):
                entrants = rng.integers(0, len(population), config.tournament_size)
                winner = min(entrants, key=lambda i: (costs[i], i))
                parents.append(population[int(winner)])
            mother, father = parents
            if num_layers > 1 and rng.random() < config.crossover_rate:
                point = int(rng.integers(1, num_layers))
                child = mother[:point] + father[point:]
            else:
                child = mother
            genes = list(child)
            for g in range(num_layers):
                if rng.random() < mutation_rate:
                    genes[g] = int(rng.integers(0, num_types))
            children.append(tuple(genes))
        population = children
        scored = evaluate_population(population)

    assert best is not None
    return ScoredPlan(
        best.plan, best.provisioning, best.cost, best.report, scorer.evaluations
    )


def heuristic_first_layer(
    graph: ModelGraph, catalog: ResourceCatalog, invert: bool = False
) -> SchedulingPlan:
    """First layer on the cheapest CPU type, the rest on the best accelerator.

    The accelerator is the non-CPU type with the smallest summed computation
    time over the layers it hosts; ties go to the lower id. ``invert`` swaps
    the roles (first layer on the accelerator, the rest on CPU).
    """
    cpu = catalog.cheapest_cpu_type()
    accelerators = [t for t in catalog.types if not t.is_cpu]

    def best_accel(layers) -> int:
        if not accelerators:
            raise ConfigError("heuristic needs at least one accelerator type")
        return min(
            accelerators,
            key=lambda t: (sum(l.per_type_oct[t.id] for l in layers), t.id),
        ).id

    if not invert:
        if graph.num_layers == 1:
            return SchedulingPlan((cpu.id,))
        gpu = best_accel(graph.layers[1:])
        return SchedulingPlan((cpu.id,) + (gpu,) * (graph.num_layers - 1))
    gpu = best_accel(graph.layers[:1])
    return SchedulingPlan((gpu,) + (cpu.id,) * (graph.num_layers - 1))


def homogeneous(
    graph: ModelGraph, catalog: ResourceCatalog, type_id: int
) -> SchedulingPlan:
    """Every layer on one type."""
    if not 0 <= type_id < catalog.num_types:
        raise PlanValidationError(
            f"unknown type id {type_id} (catalog has {catalog.num_types} types)"
        )
    return SchedulingPlan((type_id,) * graph.num_layers)


def random_search(
    graph: ModelGraph,
    catalog: ResourceCatalog,
    params: JobParams,
    budget: int,
    seed: int = 0,
    dedup: bool = False,
    config: ProvisionerConfig = ProvisionerConfig(),
) -> ScoredPlan:
    """Score ``budget`` uniform random plans and return the best one.

    With ``dedup`` the samples are drawn without replacement (a budget of
    T^L then covers the whole space, matching brute force).
    """
    if budget < 1:
        raise ConfigError("random search budget must be >= 1")
    num_types = catalog.num_types
    num_layers = graph.num_layers
    rng = np.random.default_rng(seed)
    total = num_types**num_layers

    assignments: list[tuple[int, ...]] = []
    if dedup and total <= 2**20:
        chosen = rng.permutation(total)[: min(budget, total)]
        for code in chosen:
            digits = []
            value = int(code)
            for _ in range(num_layers):
                digits.append(value % num_types)
                value //= num_types
            assignments.append(tuple(reversed(digits)))
    elif dedup:
        seen: set[tuple[int, ...]] = set()
        attempts = 0
        while len(seen) < budget and attempts < 20 * budget:
            a = tuple(int(g) for g in rng.integers(0, num_types, num_layers))
            seen.add(a)
            attempts += 1
        assignments = sorted(seen)
    else:
        for _ in range(budget):
            assignments.append(tuple(int(g) for g in rng.integers(0, num_types, num_layers)))

    scorer = PlanScorer(graph, catalog, params, config)
    best: ScoredPlan | None = None
    for assignment in assignments:
        scored = scorer(SchedulingPlan(assignment))
        if _better(scored, best):
            best = scored
    assert best is not None
    return ScoredPlan(
        best.plan, best.provisioning, best.cost, best.report, len(assignments)
    )
