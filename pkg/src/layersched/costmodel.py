"""Analytical pipeline cost model.

Pure functions estimating, for one scheduling plan plus provisioning:
per-stage compute and communication time (speedup over k units follows
Amdahl's law through the parallelizable fractions alpha/beta), stage and
pipeline throughput, total execution time, and monetary cost.

All functions are stateless and deterministic; identical inputs give
bit-identical results. Times are double-precision seconds; prices are
converted from per-hour to per-second before multiplication.

Note on units: stage times are normalized by the profiling batch size, and
stage throughput divides the training batch size by that normalized time.
Absolute throughput numbers are therefore inflated by a constant factor
relative to a wall-clock reading, but the scale is identical across plans,
so comparisons and the throughput constraint are well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .domain import (
    CostReport,
    ModelGraph,
    ProvisioningPlan,
    ResourceCatalog,
    SchedulingPlan,
    Stage,
    build_stages,
    validate_plan,
)
from .errors import InvariantError, PlanValidationError

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class JobParams:
    """Job-level constraint: the throughput the pipeline must strictly exceed."""

    throughput_limit: float

    def __post_init__(self):
        if self.throughput_limit <= 0:
            raise InvariantError("throughput_limit must be > 0")


def compute_ct(stage: Stage, k: int, profile_batch_size: int) -> float:
    """Computation time of a stage run on k units of its resource type."""
    if k < 1:
        raise InvariantError(f"resource count must be >= 1, got {k}")
    return (stage.oct / profile_batch_size) * (1.0 - stage.alpha + stage.alpha / k)


def compute_dt(stage: Stage, k: int, profile_batch_size: int) -> float:
    """Data-communication time of a stage run on k units."""
    if k < 1:
        raise InvariantError(f"resource count must be >= 1, got {k}")
    return (stage.odt / profile_batch_size) * (1.0 - stage.beta + stage.beta / k)


def stage_exec_time(ct: float, dt: float) -> float:
    """Stage execution time; computation and communication overlap."""
    return max(ct, dt)


def stage_throughput(et: float, batch_size: int) -> float:
    """Samples per second a stage sustains at execution time ``et``."""
    if et == 0:
        raise InvariantError("stage execution time must be > 0")
    return batch_size / et


def pipeline_throughput(stage_throughputs: Sequence[float]) -> float:
    """The pipeline runs at the slowest stage's throughput."""
    if not stage_throughputs:
        raise InvariantError("pipeline has no stages")
    return min(stage_throughputs)


def total_exec_time(graph: ModelGraph, throughput: float) -> float:
    """Wall time to push every epoch's samples through at ``throughput``."""
    if throughput <= 0:
        raise InvariantError("throughput must be > 0")
    return graph.epochs * graph.total_samples / throughput


def monetary_cost(
    et: float, provisioning: ProvisioningPlan, catalog: ResourceCatalog
) -> float:
    """Total price of holding the provisioned units for ``et`` seconds."""
    per_second = 0.0
    for type_id, count in provisioning.per_type_totals.items():
        if not 0 <= type_id < catalog.num_types:
            raise PlanValidationError(f"provisioning references unknown type {type_id}")
        per_second += catalog.types[type_id].price_per_hour / SECONDS_PER_HOUR * count
    return et * per_second


def evaluate(
    plan: SchedulingPlan,
    provisioning: ProvisioningPlan,
    graph: ModelGraph,
    catalog: ResourceCatalog,
    params: JobParams,
) -> CostReport:
    """Score one plan + provisioning combination.

    Infeasibility (throughput at or below the limit, or a quota exceeded) is
    reported in the result, never raised.
    """
    validate_plan(plan, graph, catalog)
    stages = build_stages(plan, graph)
    if len(provisioning.per_stage_k) != len(stages):
        raise PlanValidationError(
            f"provisioning has {len(provisioning.per_stage_k)} stage counts "
            f"but the plan induces {len(stages)} stages"
        )

    cts, dts, ets, tps = [], [], [], []
    for stage, k in zip(stages, provisioning.per_stage_k):
        ct = compute_ct(stage, k, graph.profile_batch_size)
        dt = compute_dt(stage, k, graph.profile_batch_size)
        et = stage_exec_time(ct, dt)
        # degenerate zero-time stage: infinitely fast, never the bottleneck
        tp = graph.batch_size / et if et > 0 else float("inf")
        cts.append(ct)
        dts.append(dt)
        ets.append(et)
        tps.append(tp)

    overall = pipeline_throughput(tps)
    if overall > 0 and overall != float("inf"):
        exec_time = total_exec_time(graph, overall)
    else:
        exec_time = 0.0
    cost = monetary_cost(exec_time, provisioning, catalog)

    violation = None
    if overall <= params.throughput_limit:
        violation = (
            f"pipeline throughput {overall:.6g} does not strictly exceed "
            f"limit {params.throughput_limit:.6g}"
        )
    else:
        for type_id in sorted(provisioning.per_type_totals):
            total = provisioning.per_type_totals[type_id]
            rtype = catalog.types[type_id]
            if total > rtype.quota:
                violation = (
                    f"type '{rtype.name}' needs {total} units, quota is {rtype.quota}"
                )
                break

    return CostReport(
        per_stage_ct=tuple(cts),
        per_stage_dt=tuple(dts),
        per_stage_et=tuple(ets),
        per_stage_throughput=tuple(tps),
        pipeline_throughput=overall,
        total_exec_time=exec_time,
        monetary_cost=cost,
        feasible=violation is None,
        violation=violation,
    )
