"""Experiment harness: run schedulers side by side and emit CSV data.

Everything here is plumbing around the library: method dispatch, wall-time
measurement, CSV serialization that round-trips exactly, synthetic model
resizing and multi-type catalogs for the scaling study, and the provisioning
mode comparison. No plotting — the CSVs are gnuplot-friendly data.
"""

from __future__ import annotations

import csv
import itertools
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .baselines import (
    GeneticConfig,
    brute_force,
    genetic,
    greedy,
    heuristic_first_layer,
    homogeneous,
    random_search,
)
from .costmodel import JobParams, evaluate
from .domain import (
    LayerSpec,
    ModelGraph,
    ProvisioningPlan,
    ResourceCatalog,
    ResourceType,
    SchedulingPlan,
    build_stages,
)
from .errors import ConfigError, SchedulerError
from .fileio import load_catalog, load_model_graph
from .policy import (
    TrainerConfig,
    encode_features,
    features_matrix,
    greedy_plan,
    init_policy,
    train,
)
from .provisioner import (
    MODE_OPTIMAL,
    PROVISIONING_MODES,
    ProvisionerConfig,
    provision,
)
from .scoring import PlanScorer, ScoredPlan

METHODS = (
    "bf",
    "greedy",
    "genetic",
    "heuristic",
    "cpu",
    "gpu",
    "random",
    "rl-lstm",
    "rl-rnn",
)

DEFAULT_COST_NORMALIZATION = 1000.0


@dataclass(frozen=True)
class ExperimentConfig:
    """One comparison run: which methods on which instance, with which seeds."""

    model: str
    catalog: str
    throughput_limit: float
    methods: tuple[str, ...]
    seeds: tuple[int, ...] = (0,)
    provisioning_mode: str = MODE_OPTIMAL
    out_dir: str = "results"
    cost_normalization: float = DEFAULT_COST_NORMALIZATION
    method_configs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("experiment needs at least one method")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method '{m}' (known: {', '.join(METHODS)})")
        if self.provisioning_mode not in PROVISIONING_MODES:
            raise ConfigError(f"unknown provisioning mode '{self.provisioning_mode}'")


def load_experiment_config(path) -> ExperimentConfig:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read experiment config {path}: {exc}") from exc
    try:
        return ExperimentConfig(
            model=payload["model"],
            catalog=payload["catalog"],
            throughput_limit=float(payload["throughput_limit"]),
            methods=tuple(payload["methods"]),
            seeds=tuple(payload.get("seeds", [0])),
            provisioning_mode=payload.get("provisioning_mode", MODE_OPTIMAL),
            out_dir=payload.get("out_dir", "results"),
            cost_normalization=float(
                payload.get("cost_normalization", DEFAULT_COST_NORMALIZATION)
            ),
            method_configs=payload.get("method_configs", {}),
        )
    except KeyError as exc:
        raise ConfigError(f"experiment config {path} is missing field {exc}") from exc


@dataclass(frozen=True)
class ComparisonRow:
    """One (method, seed) outcome of a comparison run."""

    method: str
    seed: int
    model: str
    plan: tuple[int, ...] | None
    cost: float | None
    normalized_cost: float | None
    throughput: float | None
    normalized_throughput: float | None
    scheduling_wall_time_s: float
    feasible: bool
    error: str = ""


def _best_accelerator(graph: ModelGraph, catalog: ResourceCatalog) -> int:
    accelerators = [t for t in catalog.types if not t.is_cpu]
    if not accelerators:
        raise ConfigError("catalog has no accelerator type")
    return min(
        accelerators,
        key=lambda t: (sum(l.per_type_oct[t.id] for l in graph.layers), t.id),
    ).id


def run_method(
    method: str,
    graph: ModelGraph,
    catalog: ResourceCatalog,
    job: JobParams,
    seed: int = 0,
    method_configs: dict | None = None,
    provisioner_config: ProvisionerConfig = ProvisionerConfig(),
) -> ScoredPlan:
    """Run one scheduling method and return its scored plan."""
    overrides = dict((method_configs or {}).get(method, {}))
    scorer = PlanScorer(graph, catalog, job, provisioner_config)
    if method == "bf":
        return brute_force(graph, catalog, job, provisioner_config)
    if method == "greedy":
        return greedy(graph, catalog, job, provisioner_config)
    if method == "genetic":
        overrides.setdefault("seed", seed)
        return genetic(graph, catalog, job, GeneticConfig(**overrides), provisioner_config)
    if method == "heuristic":
        plan = heuristic_first_layer(graph, catalog, invert=overrides.get("invert", False))
        return scorer(plan)
    if method == "cpu":
        return scorer(homogeneous(graph, catalog, catalog.cheapest_cpu_type().id))
    if method == "gpu":
        return scorer(homogeneous(graph, catalog, _best_accelerator(graph, catalog)))
    if method == "random":
        budget = overrides.get("budget", 256)
        return random_search(
            graph, catalog, job, budget, seed=seed, config=provisioner_config
        )
    if method in ("rl-lstm", "rl-rnn"):
        overrides.setdefault("seed", seed)
        overrides.setdefault("cell", "lstm" if method == "rl-lstm" else "elman")
        config = TrainerConfig(**overrides)
        params0, normalizer = init_policy(graph, catalog, config)
        result = train(graph, catalog, params0, config, job, provisioner_config)
        features = features_matrix(encode_features(graph, catalog, result.normalizer))
        final = greedy_plan(result.params, features)
        scored = scorer(final)
        return ScoredPlan(
            scored.plan, scored.provisioning, scored.cost, scored.report, None
        )
    raise ConfigError(f"unknown method '{method}'")


def run_experiment(
    config: ExperimentConfig,
    graph: ModelGraph | None = None,
    catalog: ResourceCatalog | None = None,
) -> list[ComparisonRow]:
    """Run every (method, seed) pair, write CSVs and plan files, return rows.

    A method failure is recorded in its row's ``error`` column; the run
    continues with the remaining pairs.
    """
    if graph is None:
        graph = load_model_graph(config.model)
    if catalog is None:
        catalog = load_catalog(config.catalog)
    job = JobParams(config.throughput_limit)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows: list[ComparisonRow] = []
    for method in config.methods:
        for seed in config.seeds:
            start = time.perf_counter()
            error = ""
            scored: ScoredPlan | None = None
            try:
                scored = run_method(
                    method, graph, catalog, job, seed, config.method_configs
                )
            except SchedulerError as exc:
                error = str(exc)
            wall = time.perf_counter() - start
            if scored is not None and scored.report is not None:
                throughput = scored.report.pipeline_throughput
                rows.append(
                    ComparisonRow(
                        method=method,
                        seed=seed,
                        model=graph.name,
                        plan=scored.plan.assignment,
                        cost=scored.cost,
                        normalized_cost=scored.cost * config.cost_normalization,
                        throughput=throughput,
                        normalized_throughput=throughput / config.throughput_limit,
                        scheduling_wall_time_s=wall,
                        feasible=scored.feasible,
                    )
                )
                write_plan_file(
                    out_dir / f"plan_{method}_s{seed}.json", graph, scored
                )
            else:
                rows.append(
                    ComparisonRow(
                        method=method,
                        seed=seed,
                        model=graph.name,
                        plan=scored.plan.assignment if scored else None,
                        cost=None,
                        normalized_cost=None,
                        throughput=None,
                        normalized_throughput=None,
                        scheduling_wall_time_s=wall,
                        feasible=False,
                        error=error or "no feasible provisioning",
                    )
                )
    write_comparison_csv(out_dir / "comparison.csv", rows, config.cost_normalization)
    emit_plot_data(rows, out_dir)
    return rows


# ---------------------------------------------------------------------------
# plan files


def write_plan_file(path, graph: ModelGraph, scored: ScoredPlan) -> None:
    payload = {
        "model": graph.name,
        "assignment": list(scored.plan.assignment),
        "cost": scored.cost,
        "feasible": scored.feasible,
    }
    if scored.provisioning is not None:
        payload["provisioning"] = {
            "per_stage_k": list(scored.provisioning.per_stage_k),
            "ps_cores": scored.provisioning.ps_cores,
            "per_type_totals": {
                str(t): n for t, n in sorted(scored.provisioning.per_type_totals.items())
            },
        }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_plan_file(path) -> tuple[SchedulingPlan, ProvisioningPlan | None]:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read plan file {path}: {exc}") from exc
    plan = SchedulingPlan(tuple(int(a) for a in payload["assignment"]))
    provisioning = None
    if "provisioning" in payload and payload["provisioning"] is not None:
        p = payload["provisioning"]
        provisioning = ProvisioningPlan(
            per_stage_k=tuple(int(k) for k in p["per_stage_k"]),
            ps_cores=int(p.get("ps_cores", 0)),
            per_type_totals={int(t): int(n) for t, n in p["per_type_totals"].items()},
        )
    return plan, provisioning


# ---------------------------------------------------------------------------
# CSV emission (round-trips exactly; floats written with repr)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_float(text: str) -> float | None:
    return float(text) if text else None


COMPARISON_COLUMNS = (
    "method",
    "seed",
    "model",
    "plan",
    "cost",
    "normalized_cost",
    "throughput",
    "normalized_throughput",
    "scheduling_wall_time_s",
    "feasible",
    "error",
)


def write_comparison_csv(path, rows: list[ComparisonRow], normalization: float) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(f"# cost_normalization_constant = {_fmt(normalization)}\n")
        writer = csv.writer(handle)
        writer.writerow(COMPARISON_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.method,
                    row.seed,
                    row.model,
                    "-".join(str(a) for a in row.plan) if row.plan is not None else "",
                    _fmt(row.cost),
                    _fmt(row.normalized_cost),
                    _fmt(row.throughput),
                    _fmt(row.normalized_throughput),
                    _fmt(row.scheduling_wall_time_s),
                    _fmt(row.feasible),
                    row.error,
                ]
            )


def read_comparison_csv(path) -> tuple[list[ComparisonRow], float]:
    rows: list[ComparisonRow] = []
    with open(path, newline="") as handle:
        first = handle.readline().strip()
        normalization = float(first.split("=", 1)[1])
        reader = csv.reader(handle)
        header = next(reader)
        if tuple(header) != COMPARISON_COLUMNS:
            raise ConfigError(f"unexpected comparison CSV header in {path}")
        for record in reader:
            values = dict(zip(COMPARISON_COLUMNS, record))
            plan = (
                tuple(int(a) for a in values["plan"].split("-"))
                if values["plan"]
                else None
            )
            rows.append(
                ComparisonRow(
                    method=values["method"],
                    seed=int(values["seed"]),
                    model=values["model"],
                    plan=plan,
                    cost=_parse_float(values["cost"]),
                    normalized_cost=_parse_float(values["normalized_cost"]),
                    throughput=_parse_float(values["throughput"]),
                    normalized_throughput=_parse_float(values["normalized_throughput"]),
                    scheduling_wall_time_s=float(values["scheduling_wall_time_s"]),
                    feasible=values["feasible"] == "true",
                    error=values["error"],
                )
            )
    return rows, normalization


def emit_plot_data(rows: list[ComparisonRow], out_dir) -> list[Path]:
    """One CSV per figure-style grouping; header-only when rows are empty."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(rows, key=lambda r: (r.method, r.seed, r.model))
    written = []

    specs = (
        ("cost_by_method.csv", ("method", "seed", "cost", "normalized_cost"),
         lambda r: [r.method, r.seed, _fmt(r.cost), _fmt(r.normalized_cost)]),
        ("throughput_by_method.csv", ("method", "seed", "normalized_throughput"),
         lambda r: [r.method, r.seed, _fmt(r.normalized_throughput)]),
        ("cost_by_model.csv", ("model", "method", "seed", "cost"),
         lambda r: [r.model, r.method, r.seed, _fmt(r.cost)]),
    )
    for name, columns, project in specs:
        path = out_dir / name
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(columns)
            for row in ordered:
                if row.cost is None:
                    continue
                writer.writerow(project(row))
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# synthetic instances for the scaling study


def resize_model(graph: ModelGraph, target_layers: int, kind: str = "full-connection") -> ModelGraph:
    """Grow or shrink a model to ``target_layers`` by duplicating or removing
    layers of the given kind (falling back to the most common kind)."""
    if target_layers < 1:
        raise ConfigError("target layer count must be >= 1")
    layers = list(graph.layers)
    kinds = [l.layer_kind for l in layers]
    if kind not in kinds:
        kind = max(set(kinds), key=kinds.count)
    while len(layers) > target_layers:
        victims = [i for i, l in enumerate(layers) if l.layer_kind == kind]
        index = victims[-1] if victims else len(layers) - 1
        layers.pop(index)
    while len(layers) < target_layers:
        donors = [i for i, l in enumerate(layers) if l.layer_kind == kind]
        index = donors[-1] if donors else len(layers) - 1
        layers.insert(index, layers[index])
    reindexed = [replace(layer, index=i) for i, layer in enumerate(layers)]
    return replace(
        graph, name=f"{graph.name}-L{target_layers}", layers=tuple(reindexed)
    )


def catalog_with_gpu_variants(catalog: ResourceCatalog, num_types: int) -> ResourceCatalog:
    """Extend a CPU+GPU catalog with price variants of the base accelerator
    (the same hardware at scaled prices), to num_types types total."""
    if num_types < catalog.num_types:
        raise ConfigError(
            f"cannot shrink catalog from {catalog.num_types} to {num_types} types"
        )
    accelerators = [t for t in catalog.types if not t.is_cpu]
    if not accelerators:
        raise ConfigError("catalog has no accelerator type to derive variants from")
    base = accelerators[0]
    types = list(catalog.types)
    variant = 1
    while len(types) < num_types:
        types.append(
            ResourceType(
                id=len(types),
                name=f"{base.name}-v{variant}",
                price_per_hour=base.price_per_hour * (1.0 + 0.15 * variant),
                unit=base.unit,
                quota=base.quota,
                is_cpu=False,
            )
        )
        variant += 1
    return ResourceCatalog(types=tuple(types), layer_kinds=catalog.layer_kinds)


def simulate_type_variants(graph: ModelGraph, catalog: ResourceCatalog) -> ModelGraph:
    """Fill per-layer profiles for catalog types the graph does not know,
    copying from the lowest-id type of the same class (CPU vs accelerator)."""
    cpu_ids = [t.id for t in catalog.types if t.is_cpu]
    accel_ids = [t.id for t in catalog.types if not t.is_cpu]
    new_layers = []
    for layer in graph.layers:
        tables = {}
        for name in ("per_type_oct", "per_type_odt", "per_type_alpha", "per_type_beta"):
            table = dict(getattr(layer, name))
            for rtype in catalog.types:
                if rtype.id in table:
                    continue
                pool = cpu_ids if rtype.is_cpu else accel_ids
                donors = [i for i in pool if i in table]
                if not donors:
                    raise ConfigError(
                        f"layer {layer.index} has no profile to copy for type "
                        f"{rtype.id} ({rtype.name})"
                    )
                table[rtype.id] = table[donors[0]]
            tables[name] = table
        new_layers.append(replace(layer, **tables))
    return replace(graph, layers=tuple(new_layers))


@dataclass(frozen=True)
class ScalingRow:
    layers: int
    types: int
    enumerations: int
    bf_wall_s: float
    bf_estimated: bool
    bf_cost: float | None
    rl_wall_s: float
    rl_cost: float | None


def timed_enumeration(
    graph: ModelGraph,
    catalog: ResourceCatalog,
    job: JobParams,
    time_cap_s: float,
    provisioner_config: ProvisionerConfig = ProvisionerConfig(),
) -> tuple[int, float, bool, float | None]:
    """Brute-force enumeration under a wall-time cap.

    Returns (total_count, wall_or_estimate_s, estimated, best_cost). When the
    cap is hit, the remaining time is extrapolated from the mean per-plan
    time and ``estimated`` is set; the best cost is then unknown (None).
    """
    num_types = catalog.num_types
    num_layers = graph.num_layers
    total = num_types**num_layers
    scorer = PlanScorer(graph, catalog, job, provisioner_config)
    best_cost = None
    start = time.perf_counter()
    done = 0
    for assignment in itertools.product(range(num_types), repeat=num_layers):
        scored = scorer(SchedulingPlan(assignment))
        if scored.feasible and (best_cost is None or scored.cost < best_cost):
            best_cost = scored.cost
        done += 1
        if done % 256 == 0:
            elapsed = time.perf_counter() - start
            if elapsed > time_cap_s and done < total:
                estimate = elapsed / done * total
                return total, estimate, True, None
    return total, time.perf_counter() - start, False, best_cost


SCALING_COLUMNS = (
    "layers",
    "types",
    "enumerations",
    "bf_wall_s",
    "bf_estimated",
    "bf_cost",
    "rl_wall_s",
    "rl_cost",
)


def scaling_study(
    layer_counts,
    type_counts,
    graph: ModelGraph,
    catalog: ResourceCatalog,
    job: JobParams,
    rl_config: TrainerConfig = TrainerConfig(rounds=30, plans_per_round=16),
    bf_time_cap_s: float = 60.0,
    out_dir=None,
) -> list[ScalingRow]:
    """Measure brute-force blow-up against the policy's flat scheduling time."""
    rows = []
    for num_layers in layer_counts:
        resized = resize_model(graph, num_layers)
        for num_types in type_counts:
            cat = catalog_with_gpu_variants(catalog, num_types)
            inst = simulate_type_variants(resized, cat)
            expected = num_types**num_layers
            count, bf_wall, estimated, bf_cost = timed_enumeration(
                inst, cat, job, bf_time_cap_s
            )
            assert count == expected, f"enumeration count {count} != {expected}"

            start = time.perf_counter()
            params0, _ = init_policy(inst, cat, rl_config)
            result = train(inst, cat, params0, rl_config, job)
            features = features_matrix(
                encode_features(inst, cat, result.normalizer)
            )
            final = greedy_plan(result.params, features)
            scored = PlanScorer(inst, cat, job)(final)
            rl_wall = time.perf_counter() - start
            rows.append(
                ScalingRow(
                    layers=num_layers,
                    types=num_types,
                    enumerations=count,
                    bf_wall_s=bf_wall,
                    bf_estimated=estimated,
                    bf_cost=bf_cost,
                    rl_wall_s=rl_wall,
                    rl_cost=scored.cost if scored.feasible else None,
                )
            )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "scaling.csv", "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(SCALING_COLUMNS)
            for row in rows:
                writer.writerow(
                    [
                        row.layers,
                        row.types,
                        row.enumerations,
                        _fmt(row.bf_wall_s),
                        _fmt(row.bf_estimated),
                        _fmt(row.bf_cost),
                        _fmt(row.rl_wall_s),
                        _fmt(row.rl_cost),
                    ]
                )
    return rows


# ---------------------------------------------------------------------------
# provisioning mode comparison on one fixed plan


@dataclass(frozen=True)
class ProvisioningRow:
    mode: str
    cost: float | None
    throughput: float | None
    per_stage_k: tuple[int, ...] | None
    ps_cores: int | None
    feasible: bool
    error: str = ""


def provisioning_study(
    plan: SchedulingPlan,
    graph: ModelGraph,
    catalog: ResourceCatalog,
    job: JobParams,
    modes=PROVISIONING_MODES,
    provisioner_config: ProvisionerConfig = ProvisionerConfig(),
    out_dir=None,
) -> list[ProvisioningRow]:
    """Compare provisioning modes on one fixed plan.

    ``optimal`` here is the cost-minimizing search alone (no parameter-server
    surcharge), matching its documented contract; the static PS variant
    embeds its own PS rule.
    """
    rows = []
    for mode in modes:
        try:
            provisioning = provision(
                plan, graph, catalog, job, provisioner_config, mode=mode, with_ps=False
            )
            report = evaluate(plan, provisioning, graph, catalog, job)
            rows.append(
                ProvisioningRow(
                    mode=mode,
                    cost=report.monetary_cost,
                    throughput=report.pipeline_throughput,
                    per_stage_k=provisioning.per_stage_k,
                    ps_cores=provisioning.ps_cores,
                    feasible=report.feasible,
                )
            )
        except SchedulerError as exc:
            rows.append(
                ProvisioningRow(
                    mode=mode,
                    cost=None,
                    throughput=None,
                    per_stage_k=None,
                    ps_cores=None,
                    feasible=False,
                    error=str(exc),
                )
            )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "provisioning.csv", "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ("mode", "cost", "throughput", "per_stage_k", "ps_cores", "feasible", "error")
            )
            for row in rows:
                writer.writerow(
                    [
                        row.mode,
                        _fmt(row.cost),
                        _fmt(row.throughput),
                        "-".join(str(k) for k in row.per_stage_k)
                        if row.per_stage_k
                        else "",
                        _fmt(row.ps_cores),
                        _fmt(row.feasible),
                        row.error,
                    ]
                )
    return rows
