"""Shared domain types: model graphs, resource catalogs, plans and stages.

All types are immutable after construction (frozen dataclasses) and safe to
share across threads. Construction validates structural invariants and raises
:class:`~layersched.errors.InvariantError` on violation.

A scheduling plan assigns one resource type to every layer. Maximal runs of
consecutive layers on the same type form the stages of the training pipeline;
:func:`build_stages` performs that grouping and aggregates per-layer profiling
numbers into per-stage ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import InvariantError, PlanValidationError


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a model, with per-resource-type profiling numbers.

    ``per_type_oct`` / ``per_type_odt`` give the profiled computation and
    (boundary) data-communication seconds for one unit of each resource type
    at the profiling batch size. ``per_type_alpha`` / ``per_type_beta`` give
    the parallelizable fraction of each workload on that type.
    """

    index: int
    layer_kind: str
    input_size: float
    weight_size: float
    per_type_oct: Mapping[int, float]
    per_type_odt: Mapping[int, float]
    per_type_alpha: Mapping[int, float]
    per_type_beta: Mapping[int, float]

    def __post_init__(self):
        if self.index < 0:
            raise InvariantError(f"layer index must be >= 0, got {self.index}")
        if self.input_size < 0 or self.weight_size < 0:
            raise InvariantError(
                f"layer {self.index}: input_size and weight_size must be >= 0"
            )
        for name, table in (("oct", self.per_type_oct), ("odt", self.per_type_odt)):
            for type_id, value in table.items():
                if value < 0:
                    raise InvariantError(
                        f"layer {self.index}: {name}[{type_id}] must be >= 0, got {value}"
                    )
        for name, table in (
            ("alpha", self.per_type_alpha),
            ("beta", self.per_type_beta),
        ):
            for type_id, value in table.items():
                if not 0.0 <= value <= 1.0:
                    raise InvariantError(
                        f"layer {self.index}: {name}[{type_id}] must be in [0,1], got {value}"
                    )

    def covers_types(self, type_ids: Sequence[int]) -> bool:
        """True when every profiling table has an entry for every given type."""
        tables = (
            self.per_type_oct,
            self.per_type_odt,
            self.per_type_alpha,
            self.per_type_beta,
        )
        return all(t in table for table in tables for t in type_ids)


@dataclass(frozen=True)
class ModelGraph:
    """A linear chain of layers plus the job-level counts of the training run.

    ``total_samples`` is the number of training examples per epoch,
    ``batch_size`` the training batch size, and ``profile_batch_size`` the
    small batch used when the per-layer times were profiled.
    """

    name: str
    layers: tuple[LayerSpec, ...]
    total_samples: int
    epochs: int
    batch_size: int
    profile_batch_size: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise InvariantError("model graph must have at least one layer")
        for position, layer in enumerate(self.layers):
            if layer.index != position:
                raise InvariantError(
                    f"layer indices must be contiguous from 0; "
                    f"position {position} holds index {layer.index}"
                )
        if self.profile_batch_size < 1:
            raise InvariantError("profile_batch_size must be >= 1")
        if self.batch_size < 1:
            raise InvariantError("batch_size must be >= 1")
        if self.total_samples < self.batch_size:
            raise InvariantError("total_samples must be >= batch_size")
        if self.epochs < 1:
            raise InvariantError("epochs must be >= 1")

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class ResourceType:
    """One class of computing resource with its hourly price and quota.

    ``is_cpu`` marks types whose units may also host parameter-server cores.
    """

    id: int
    name: str
    price_per_hour: float
    unit: str
    quota: int
    is_cpu: bool

    def __post_init__(self):
        if self.price_per_hour <= 0:
            raise InvariantError(
                f"type {self.id} ({self.name}): price_per_hour must be > 0"
            )
        if self.quota < 1:
            raise InvariantError(f"type {self.id} ({self.name}): quota must be >= 1")


@dataclass(frozen=True)
class ResourceCatalog:
    """The available resource types; ids must be contiguous from 0.

    ``layer_kinds`` optionally declares the categorical vocabulary of layer
    kinds; when empty, consumers derive the vocabulary from the model graph.
    """

    types: tuple[ResourceType, ...]
    layer_kinds: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(self.types))
        object.__setattr__(self, "layer_kinds", tuple(self.layer_kinds))
        if not self.types:
            raise InvariantError("catalog must declare at least one resource type")
        ids = [t.id for t in self.types]
        if ids != list(range(len(self.types))):
            raise InvariantError(
                f"type ids must be unique and contiguous from 0, got {ids}"
            )

    @property
    def num_types(self) -> int:
        return len(self.types)

    def cheapest_cpu_type(self) -> ResourceType:
        cpu_types = [t for t in self.types if t.is_cpu]
        if not cpu_types:
            raise InvariantError("catalog has no CPU-capable resource type")
        return min(cpu_types, key=lambda t: (t.price_per_hour, t.id))


@dataclass(frozen=True)
class SchedulingPlan:
    """Dense per-layer assignment: ``assignment[l]`` is layer *l*'s type id."""

    assignment: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(a) for a in self.assignment))
        if not self.assignment:
            raise InvariantError("scheduling plan must cover at least one layer")

    def __len__(self) -> int:
        return len(self.assignment)


@dataclass(frozen=True)
class Stage:
    """A maximal run of consecutive layers assigned to one resource type.

    ``oct`` is the summed computation time of the member layers on the
    stage's type; ``odt`` is the boundary communication time, taken from the
    stage's final layer (its output is what crosses to the next stage — for
    the last stage it is the profiled gradient/parameter synchronization
    time). ``alpha`` / ``beta`` are time-weighted means of member fractions.
    """

    index: int
    type_id: int
    layer_range: tuple[int, int]
    oct: float
    odt: float
    alpha: float
    beta: float

    @property
    def num_layers(self) -> int:
        first, last = self.layer_range
        return last - first + 1


@dataclass(frozen=True)
class ProvisioningPlan:
    """Per-stage resource counts plus parameter-server cores.

    ``per_type_totals`` maps type id to the total units charged for that
    type, including ``ps_cores`` under the CPU type hosting them.
    """

    per_stage_k: tuple[int, ...]
    ps_cores: int
    per_type_totals: Mapping[int, int]

    def __post_init__(self):
        object.__setattr__(self, "per_stage_k", tuple(int(k) for k in self.per_stage_k))
        object.__setattr__(self, "per_type_totals", dict(self.per_type_totals))
        if any(k < 1 for k in self.per_stage_k):
            raise InvariantError("every per-stage count must be >= 1")
        if self.ps_cores < 0:
            raise InvariantError("ps_cores must be >= 0")

    @property
    def total_units(self) -> int:
        return sum(self.per_type_totals.values())


@dataclass(frozen=True)
class CostReport:
    """Full evaluation of one plan + provisioning: times, throughput, cost.

    ``feasible`` is true iff pipeline throughput strictly exceeds the limit
    and no per-type total exceeds its quota; ``violation`` names the first
    violated constraint otherwise.
    """

    per_stage_ct: tuple[float, ...]
    per_stage_dt: tuple[float, ...]
    per_stage_et: tuple[float, ...]
    per_stage_throughput: tuple[float, ...]
    pipeline_throughput: float
    total_exec_time: float
    monetary_cost: float
    feasible: bool
    violation: str | None = None


def validate_plan(
    plan: SchedulingPlan, graph: ModelGraph, catalog: ResourceCatalog
) -> None:
    """Check that a plan fits the graph and only uses catalog type ids.

    Raises :class:`PlanValidationError` on length mismatch or unknown id.
    """
    if len(plan) != graph.num_layers:
        raise PlanValidationError(
            f"plan covers {len(plan)} layers but model "
            f"'{graph.name}' has {graph.num_layers}"
        )
    for layer_index, type_id in enumerate(plan.assignment):
        if not 0 <= type_id < catalog.num_types:
            raise PlanValidationError(
                f"layer {layer_index} assigned to unknown type id {type_id} "
                f"(catalog has {catalog.num_types} types)"
            )


def build_stages(plan: SchedulingPlan, graph: ModelGraph) -> tuple[Stage, ...]:
    """Group the plan's assignment into contiguous same-type stages.

    Per stage: oct sums the member layers' computation times on the stage's
    type; odt is the final member layer's communication time; alpha (beta) is
    the oct-weighted (odt-weighted) mean of member fractions, falling back to
    a plain mean when the weights sum to zero.
    """
    if len(plan) != graph.num_layers:
        raise PlanValidationError(
            f"plan covers {len(plan)} layers but model "
            f"'{graph.name}' has {graph.num_layers}"
        )
    stages: list[Stage] = []
    start = 0
    assignment = plan.assignment
    for pos in range(1, len(assignment) + 1):
        if pos < len(assignment) and assignment[pos] == assignment[start]:
            continue
        type_id = assignment[start]
        members = graph.layers[start:pos]
        try:
            octs = [layer.per_type_oct[type_id] for layer in members]
            odts = [layer.per_type_odt[type_id] for layer in members]
            alphas = [layer.per_type_alpha[type_id] for layer in members]
            betas = [layer.per_type_beta[type_id] for layer in members]
        except KeyError:
            raise PlanValidationError(
                f"layer profiles do not cover type id {type_id} "
                f"(layers {start}..{pos - 1})"
            ) from None
        oct_sum = sum(octs)
        if oct_sum > 0:
            alpha = sum(o * a for o, a in zip(octs, alphas)) / oct_sum
        else:
            alpha = sum(alphas) / len(alphas)
        odt_sum = sum(odts)
        if odt_sum > 0:
            beta = sum(d * b for d, b in zip(odts, betas)) / odt_sum
        else:
            beta = sum(betas) / len(betas)
        stages.append(
            Stage(
                index=len(stages),
                type_id=type_id,
                layer_range=(start, pos - 1),
                oct=oct_sum,
                odt=odts[-1],
                alpha=alpha,
                beta=beta,
            )
        )
        start = pos
    return tuple(stages)


def make_provisioning(
    stages: Sequence[Stage],
    per_stage_k: Sequence[int],
    ps_cores: int = 0,
    ps_type_id: int | None = None,
) -> ProvisioningPlan:
    """Assemble a ProvisioningPlan, deriving per-type totals from the stages."""
    if len(stages) != len(per_stage_k):
        raise PlanValidationError(
            f"{len(per_stage_k)} stage counts given for {len(stages)} stages"
        )
    totals: dict[int, int] = {}
    for stage, k in zip(stages, per_stage_k):
        totals[stage.type_id] = totals.get(stage.type_id, 0) + int(k)
    if ps_cores > 0:
        if ps_type_id is None:
            raise InvariantError("ps_cores > 0 requires ps_type_id")
        totals[ps_type_id] = totals.get(ps_type_id, 0) + int(ps_cores)
    return ProvisioningPlan(
        per_stage_k=tuple(int(k) for k in per_stage_k),
        ps_cores=int(ps_cores),
        per_type_totals=totals,
    )
