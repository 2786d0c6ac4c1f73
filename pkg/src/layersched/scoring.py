"""Plan scoring shared by every searcher: provision, evaluate, penalize.

A plan's score is the monetary cost of its optimally provisioned execution.
Plans that cannot be provisioned feasibly get a penalty cost far above any
real cost, scaled by the magnitude of the constraint violation so that
search methods can still rank infeasible plans against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

from .costmodel import CostReport, JobParams, evaluate
from .domain import (
    ModelGraph,
    ProvisioningPlan,
    ResourceCatalog,
    SchedulingPlan,
    validate_plan,
)
from .errors import InfeasibleError
from .provisioner import MODE_OPTIMAL, ProvisionerConfig, provision

PENALTY_FACTOR = 1e6


@dataclass(frozen=True)
class ScoredPlan:
    """A plan with its provisioning and cost; ``provisioning`` is None and
    ``cost`` is a penalty when no feasible provisioning exists.

    ``evaluations`` is set by search methods to the number of plans they
    scored (for brute force, the full enumeration count).
    """

    plan: SchedulingPlan
    provisioning: ProvisioningPlan | None
    cost: float
    report: CostReport | None = None
    evaluations: int | None = None

    @property
    def feasible(self) -> bool:
        return self.provisioning is not None


def penalty_cost(catalog: ResourceCatalog, gap: float) -> float:
    """Penalty for an infeasible plan: huge, but ordered by violation size."""
    price_scale = max(t.price_per_hour for t in catalog.types)
    return PENALTY_FACTOR * price_scale * (1.0 + max(0.0, gap))


class PlanScorer:
    """Callable scoring plans for one (graph, catalog, job) instance.

    Results are cached by assignment; scoring is pure, so the cache never
    changes observable behavior, only speed. ``evaluations`` counts distinct
    plans actually scored.
    """

    def __init__(
        self,
        graph: ModelGraph,
        catalog: ResourceCatalog,
        params: JobParams,
        config: ProvisionerConfig = ProvisionerConfig(),
        mode: str = MODE_OPTIMAL,
        with_ps: bool = True,
    ):
        self.graph = graph
        self.catalog = catalog
        self.params = params
        self.config = config
        self.mode = mode
        self.with_ps = with_ps
        self.evaluations = 0
        self._cache: dict[tuple[int, ...], ScoredPlan] = {}

    def __call__(self, plan: SchedulingPlan) -> ScoredPlan:
        key = plan.assignment
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        self.evaluations += 1
        validate_plan(plan, self.graph, self.catalog)
        try:
            provisioning = provision(
                plan,
                self.graph,
                self.catalog,
                self.params,
                self.config,
                mode=self.mode,
                with_ps=self.with_ps,
            )
            report = evaluate(plan, provisioning, self.graph, self.catalog, self.params)
            scored = ScoredPlan(plan, provisioning, report.monetary_cost, report)
        except InfeasibleError as exc:
            scored = ScoredPlan(plan, None, penalty_cost(self.catalog, exc.gap), None)
        self._cache[key] = scored
        return scored
