"""Resource provisioning for a fixed scheduling plan.

Given the stages induced by a plan, chooses how many units each stage gets.

The optimizing path balances stage throughput: it searches over the target
pipeline iteration time tau, gives every stage the smallest count whose
execution time (max of compute and communication, Amdahl-scaled) fits under
tau, and picks the tau of minimum monetary cost subject to the throughput
floor and the per-type quotas. Parameterizing by tau is equivalent to
parameterizing by the first stage's count (tau is stage 1's execution time
at that count) and reduces to the classic compute-time balance relation when
stages are compute-bound; matching full execution times keeps communication-
bound stages from dragging every other stage into over-provisioning.

The continuous search runs Newton on finite-difference derivatives with a
golden-section fallback; because integer rounding makes the true cost a step
function of tau, the final answer is refined over the step breakpoints (the
taus where some stage's integer count changes), which is exact whenever the
breakpoint set is small enough to enumerate.

Static baselines provision at a fixed GPU:CPU ratio (1:6), optionally with
parameter-server cores at the same ratio (1:6:6), scanning the smallest GPU
count that meets the throughput limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .costmodel import JobParams, evaluate
from .domain import (
    ModelGraph,
    ProvisioningPlan,
    ResourceCatalog,
    SchedulingPlan,
    Stage,
    build_stages,
    make_provisioning,
    validate_plan,
)
from .errors import InfeasibleError, InvariantError

STATIC_CPU_PER_GPU = 6
SECONDS_PER_HOUR = 3600.0
BREAKPOINT_LIMIT = 4096

MODE_OPTIMAL = "optimal"
MODE_STARATIO = "staratio"
MODE_STAPSRATIO = "stapsratio"
PROVISIONING_MODES = (MODE_OPTIMAL, MODE_STARATIO, MODE_STAPSRATIO)


@dataclass(frozen=True)
class ProvisionerConfig:
    """Knobs of the optimizing provisioner.

    ``ps_cores_per_gpu`` sizes the parameter-server core pool per accelerator
    unit. The Newton parameters control the continuous 1-D search.
    """

    ps_cores_per_gpu: float = 6.0
    newton_max_iters: int = 50
    newton_tol: float = 1e-3
    fd_step: float = 1e-3

    def __post_init__(self):
        if min(self.ps_cores_per_gpu, self.newton_max_iters, self.newton_tol, self.fd_step) <= 0:
            raise InvariantError("all provisioner parameters must be positive")


def _iceil(x: float) -> int:
    # absorb float fuzz so 2.0000000001 does not round to 3
    return max(1, math.ceil(x - 1e-9))


def min_k1(stage: Stage, params: JobParams, profile_batch_size: int) -> float:
    """Lower bound on the first stage's count from the throughput floor.

    Both the computation and the communication side must fit under the
    budget, so the binding bound is the larger of the two.
    """
    budget = params.throughput_limit * profile_batch_size
    bounds = []
    for work, frac, label in (
        (stage.oct, stage.alpha, "computation"),
        (stage.odt, stage.beta, "communication"),
    ):
        if work == 0:
            bounds.append(0.0)
            continue
        denom = budget - (1.0 - frac) * work
        if denom <= 0:
            gap = ((1.0 - frac) * work - budget) / budget
            raise InfeasibleError(
                f"stage {stage.index} cannot reach the throughput limit at any "
                f"count: serial {label} time exceeds the budget",
                gap=gap,
            )
        bounds.append(frac * work / denom)
    return max(bounds)


def derive_ki(k1: float, stage_1: Stage, stage_i: Stage) -> float:
    """Count stage i needs so its computation time matches stage 1's at k1.

    This is the compute-bound load-balance relation (communication ignored);
    :func:`optimize_k1` matches full execution times instead, which reduces
    to this relation when every stage is compute-bound.

    Returns a real count clamped to >= 1. Raises :class:`InfeasibleError`
    when stage i cannot match stage 1's time at this k1 even with unbounded
    resources (its serial floor is too high).
    """
    if stage_i.oct == 0:
        return 1.0
    if stage_1.oct == 0:
        raise InfeasibleError(
            f"stage {stage_1.index} has zero computation time; "
            f"stage {stage_i.index} cannot match it"
        )
    target = (stage_1.oct / stage_i.oct) * (1.0 - stage_1.alpha + stage_1.alpha / k1)
    denom = target - (1.0 - stage_i.alpha)
    if stage_i.alpha == 0:
        if denom >= 0:
            return 1.0
        raise InfeasibleError(
            f"stage {stage_i.index} is serial and slower than stage "
            f"{stage_1.index} at k1={k1:.6g}",
            gap=-denom,
        )
    if denom <= 0:
        raise InfeasibleError(
            f"stage {stage_i.index} cannot match stage {stage_1.index}'s "
            f"throughput at k1={k1:.6g}",
            gap=-denom,
        )
    return max(1.0, stage_i.alpha / denom)


def _stage_et(stage: Stage, k: float, bo: int) -> float:
    ct = (stage.oct / bo) * (1.0 - stage.alpha + stage.alpha / k)
    dt = (stage.odt / bo) * (1.0 - stage.beta + stage.beta / k)
    return max(ct, dt)


def _floor_count(stage: Stage, target_et: float, bo: int) -> float:
    """Smallest real count putting both of a stage's times at or under
    ``target_et``; raises when no finite count can (serial floor too high)."""
    required = 1.0
    for work, frac, label in (
        (stage.oct, stage.alpha, "computation"),
        (stage.odt, stage.beta, "communication"),
    ):
        if work == 0:
            continue
        headroom = target_et * bo / work - (1.0 - frac)
        if frac == 0.0:
            if headroom >= 0:
                continue
            raise InfeasibleError(
                f"stage {stage.index}: serial {label} time exceeds the "
                f"load-balance target",
                gap=-headroom,
            )
        if headroom <= 0:
            raise InfeasibleError(
                f"stage {stage.index}: {label} cannot reach the load-balance "
                f"target at any count",
                gap=-headroom,
            )
        required = max(required, frac / headroom)
    return required


def _counts_at(tau: float, stages: Sequence[Stage], bo: int) -> list[int]:
    """Integer per-stage counts for target iteration time tau."""
    return [_iceil(_floor_count(stage, tau, bo)) for stage in stages]


def _serial_floor(stages: Sequence[Stage], bo: int) -> float:
    """Largest per-stage execution time that remains with unbounded counts."""
    floor = 0.0
    for stage in stages:
        floor = max(
            floor,
            (stage.oct / bo) * (1.0 - stage.alpha),
            (stage.odt / bo) * (1.0 - stage.beta),
        )
    return floor


class _CostModel:
    """Fast scalar replica of the cost model for candidate screening.

    Uses the same formulas as :func:`layersched.costmodel.evaluate`; the
    winning candidate is re-checked through ``evaluate`` before returning.
    """

    def __init__(self, stages, graph: ModelGraph, catalog: ResourceCatalog, params: JobParams):
        self.stages = stages
        self.bo = graph.profile_batch_size
        self.batch = graph.batch_size
        self.work = graph.epochs * graph.total_samples
        self.limit = params.throughput_limit
        self.prices = [t.price_per_hour / SECONDS_PER_HOUR for t in catalog.types]
        self.quotas = [t.quota for t in catalog.types]

    def integer_cost(self, counts: Sequence[int]) -> float | None:
        """Monetary cost of integer counts, or None when infeasible."""
        totals: dict[int, int] = {}
        actual_et = 0.0
        for stage, k in zip(self.stages, counts):
            actual_et = max(actual_et, _stage_et(stage, k, self.bo))
            totals[stage.type_id] = totals.get(stage.type_id, 0) + k
        for type_id, total in totals.items():
            if total > self.quotas[type_id]:
                return None
        if actual_et <= 0:
            return 0.0
        throughput = self.batch / actual_et
        if not throughput > self.limit:
            return None
        per_second = sum(self.prices[s.type_id] * k for s, k in zip(self.stages, counts))
        return self.work / throughput * per_second

    def real_cost(self, tau: float) -> float:
        """Smooth relaxation over real counts, for the continuous search."""
        try:
            counts = [
                max(1.0, _floor_count(stage, tau, self.bo)) for stage in self.stages
            ]
        except InfeasibleError:
            return math.inf
        actual_et = max(
            _stage_et(stage, k, self.bo) for stage, k in zip(self.stages, counts)
        )
        if actual_et <= 0:
            return 0.0
        throughput = self.batch / actual_et
        if not throughput > self.limit:
            return math.inf
        per_second = sum(
            self.prices[s.type_id] * k for s, k in zip(self.stages, counts)
        )
        return self.work / throughput * per_second

    def quota_ok(self, tau: float) -> bool:
        try:
            counts = _counts_at(tau, self.stages, self.bo)
        except InfeasibleError:
            return False
        totals: dict[int, int] = {}
        for stage, k in zip(self.stages, counts):
            totals[stage.type_id] = totals.get(stage.type_id, 0) + k
        return all(totals[t] <= self.quotas[t] for t in totals)


def _best_candidate(
    taus: np.ndarray,
    stages: Sequence[Stage],
    model: "_CostModel",
    bo: int,
) -> list[int] | None:
    """Evaluate every candidate tau at once; return the cheapest feasible
    integer counts (ties broken toward the lexicographically smaller
    vector), or None when no candidate is feasible."""
    oct_ = np.array([s.oct for s in stages])[:, None]
    odt_ = np.array([s.odt for s in stages])[:, None]
    alpha = np.array([s.alpha for s in stages])[:, None]
    beta = np.array([s.beta for s in stages])[:, None]
    taus = taus[None, :]

    def side_counts(work, frac):
        # smallest count putting this side under tau; +inf when impossible
        with np.errstate(divide="ignore", invalid="ignore"):
            headroom = taus * bo / work - (1.0 - frac)
            counts = np.where(headroom > 0, frac / headroom, np.inf)
        counts = np.where(work == 0, 1.0, counts)
        counts = np.where((frac == 0) & (headroom >= 0), 1.0, counts)
        return counts

    k = np.maximum(side_counts(oct_, alpha), side_counts(odt_, beta))
    k = np.maximum(k, 1.0)
    counts = np.where(np.isfinite(k), np.ceil(k - 1e-9), np.inf)
    ok = np.all(np.isfinite(counts), axis=0)
    safe = np.where(np.isfinite(counts), counts, 1.0)

    with np.errstate(divide="ignore"):
        ct = (oct_ / bo) * (1.0 - alpha + alpha / safe)
        dt = (odt_ / bo) * (1.0 - beta + beta / safe)
    actual_et = np.maximum(ct, dt).max(axis=0)
    with np.errstate(divide="ignore"):
        throughput = np.where(actual_et > 0, model.batch / actual_et, np.inf)
    ok &= throughput > model.limit

    type_ids = [s.type_id for s in stages]
    for type_id in sorted(set(type_ids)):
        members = [i for i, t in enumerate(type_ids) if t == type_id]
        ok &= safe[members].sum(axis=0) <= model.quotas[type_id]

    prices = np.array([model.prices[t] for t in type_ids])[:, None]
    per_second = (prices * safe).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cost = np.where(ok, model.work / throughput * per_second, np.inf)
    if not ok.any():
        return None
    best = float(cost.min())
    ties = np.flatnonzero(cost <= best + 1e-15)
    vectors = sorted(tuple(int(v) for v in safe[:, i]) for i in ties)
    return list(vectors[0])


def _newton_minimize(f, lo: float, hi: float, config: ProvisionerConfig) -> float | None:
    """Newton iteration on the finite-difference derivative of f.

    Returns the converged point, or None when the iteration stalls, leaves
    [lo, hi], or runs out of iterations (caller falls back to golden section).
    """
    h = max(config.fd_step * (hi - lo), 1e-12)
    x = min(hi - h, lo + max(h, (hi - lo) * 0.25))
    if x <= lo + h:
        return None
    for _ in range(config.newton_max_iters):
        f_minus, f_0, f_plus = f(x - h), f(x), f(x + h)
        if not all(math.isfinite(v) for v in (f_minus, f_0, f_plus)):
            return None
        d1 = (f_plus - f_minus) / (2.0 * h)
        d2 = (f_plus - 2.0 * f_0 + f_minus) / (h * h)
        if abs(d2) < 1e-18:
            return None
        step = d1 / d2
        x_next = x - step
        if not math.isfinite(x_next) or x_next < lo or x_next > hi:
            return None
        if abs(x_next - x) < config.newton_tol * max(1.0, abs(x)):
            # a Newton root could be a maximum; only accept a local minimum
            if f(x_next) <= f_0 + 1e-12:
                return x_next
            return None
        x = x_next
    return None


def _golden_minimize(f, lo: float, hi: float, iters: int = 60) -> float:
    """Coarse scan then golden-section refinement; deterministic."""
    if hi <= lo:
        return lo
    n = 17
    xs = [lo + (hi - lo) * i / (n - 1) for i in range(n)]
    values = [f(x) for x in xs]
    best = min(range(n), key=lambda i: (values[i], i))
    a = xs[max(0, best - 1)]
    b = xs[min(n - 1, best + 1)]
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def optimize_k1(
    plan: SchedulingPlan,
    graph: ModelGraph,
    catalog: ResourceCatalog,
    params: JobParams,
    config: ProvisionerConfig = ProvisionerConfig(),
) -> ProvisioningPlan:
    """Minimum-cost per-stage counts balancing stage throughput.

    The returned plan always evaluates feasible (throughput strictly above
    the limit, quotas respected) or the call raises :class:`InfeasibleError`.
    """
    validate_plan(plan, graph, catalog)
    stages = build_stages(plan, graph)
    bo = graph.profile_batch_size
    model = _CostModel(stages, graph, catalog, params)

    # throughput floor as a cap on the target iteration time; the classic
    # first-stage bound (which propagates its own infeasibility) tightens it
    # further when it exceeds one unit
    k1_floor = min_k1(stages[0], params, bo)
    tau_hi = graph.batch_size / params.throughput_limit
    if k1_floor > 1.0:
        tau_hi = min(tau_hi, _stage_et(stages[0], k1_floor, bo))

    serial = _serial_floor(stages, bo)
    if serial >= tau_hi:
        worst = max(
            stages,
            key=lambda s: max(
                (s.oct / bo) * (1.0 - s.alpha), (s.odt / bo) * (1.0 - s.beta)
            ),
        )
        raise InfeasibleError(
            f"stage {worst.index} cannot reach the throughput limit at any "
            f"count: its serial time {serial:.6g}s is not below the budget "
            f"{tau_hi:.6g}s",
            gap=(serial - tau_hi) / tau_hi,
        )
    if not model.quota_ok(tau_hi):
        counts = _counts_at(tau_hi, stages, bo)
        totals: dict[int, int] = {}
        for stage, k in zip(stages, counts):
            totals[stage.type_id] = totals.get(stage.type_id, 0) + k
        offender = next(
            t for t, total in sorted(totals.items()) if total > catalog.types[t].quota
        )
        raise InfeasibleError(
            f"no count within quota meets the throughput limit: type "
            f"'{catalog.types[offender].name}' needs {totals[offender]} units, "
            f"quota is {catalog.types[offender].quota}",
            gap=(totals[offender] - catalog.types[offender].quota)
            / catalog.types[offender].quota,
        )

    # smallest quota-feasible tau (more throughput needs more units)
    a, b = serial, tau_hi
    for _ in range(60):
        mid = (a + b) / 2.0
        if model.quota_ok(mid):
            b = mid
        else:
            a = mid
    tau_lo = b

    # integer cost is a step function of tau; its steps sit where some
    # stage's integer count changes, i.e. at each stage's execution time
    # taken at an integer count
    breakpoints: set[float] = {tau_lo, tau_hi}
    for stage in stages:
        m_min = _iceil(_floor_count(stage, tau_hi, bo))
        m_max = _iceil(_floor_count(stage, tau_lo, bo))
        span = m_max - m_min
        if span > BREAKPOINT_LIMIT:
            continue
        counts_range = np.arange(m_min, m_max + 1, dtype=float)
        ct = (stage.oct / bo) * (1.0 - stage.alpha + stage.alpha / counts_range)
        dt = (stage.odt / bo) * (1.0 - stage.beta + stage.beta / counts_range)
        ets = np.maximum(ct, dt)
        for bp in ets[(ets >= tau_lo) & (ets <= tau_hi)]:
            breakpoints.add(float(bp))
    candidates = sorted(breakpoints)
    if len(candidates) > BREAKPOINT_LIMIT:
        # too many steps to enumerate: locate the low-cost region with the
        # continuous search, then keep the ends, an even subsample, and the
        # continuous optimum's neighborhood
        tau_star = _newton_minimize(model.real_cost, tau_lo, tau_hi, config)
        if tau_star is None:
            tau_star = _golden_minimize(model.real_cost, tau_lo, tau_hi)
        step = len(candidates) / (BREAKPOINT_LIMIT // 2)
        kept = {candidates[0], candidates[-1]}
        for i in range(BREAKPOINT_LIMIT // 2):
            kept.add(candidates[int(i * step)])
        centre = min(range(len(candidates)), key=lambda i: abs(candidates[i] - tau_star))
        for i in range(max(0, centre - 256), min(len(candidates), centre + 256)):
            kept.add(candidates[i])
        candidates = sorted(kept)

    best_counts = _best_candidate(np.array(candidates), stages, model, bo)
    if best_counts is None:
        raise InfeasibleError(
            "no count within quota meets the throughput limit strictly",
            gap=1.0,
        )

    provisioning = make_provisioning(stages, best_counts)
    report = evaluate(plan, provisioning, graph, catalog, params)
    if not report.feasible:  # defensive; candidates were feasibility-checked
        raise InfeasibleError(f"optimizer produced infeasible plan: {report.violation}")
    return provisioning


def add_ps_cores(
    provisioning: ProvisioningPlan,
    stages: Sequence[Stage],
    catalog: ResourceCatalog,
    config: ProvisionerConfig = ProvisionerConfig(),
) -> ProvisioningPlan:
    """Charge parameter-server cores for the plan's accelerator units.

    One pool of ``ps_cores_per_gpu`` CPU cores per accelerator unit, rounded
    up, billed to the cheapest CPU-capable type.
    """
    accel_units = sum(
        k
        for stage, k in zip(stages, provisioning.per_stage_k)
        if not catalog.types[stage.type_id].is_cpu
    )
    if accel_units == 0:
        return provisioning
    ps = math.ceil(config.ps_cores_per_gpu * accel_units - 1e-9)
    cpu_type = catalog.cheapest_cpu_type()
    would_have = provisioning.per_type_totals.get(cpu_type.id, 0) + ps
    if would_have > cpu_type.quota:
        raise InfeasibleError(
            f"type '{cpu_type.name}' needs {would_have} units including "
            f"{ps} parameter-server cores, quota is {cpu_type.quota}",
            gap=(would_have - cpu_type.quota) / cpu_type.quota,
        )
    return make_provisioning(stages, provisioning.per_stage_k, ps, cpu_type.id)


def static_provision(
    plan: SchedulingPlan,
    graph: ModelGraph,
    catalog: ResourceCatalog,
    params: JobParams,
    mode: str,
    cpu_per_gpu: int = STATIC_CPU_PER_GPU,
) -> ProvisioningPlan:
    """Fixed-ratio provisioning baseline.

    Scales a bundle of 1 accelerator unit per accelerator stage and
    ``cpu_per_gpu`` cores per CPU stage, scanning the smallest multiplier
    that meets the throughput limit. ``stapsratio`` additionally charges
    ``cpu_per_gpu`` parameter-server cores per accelerator unit.
    """
    if mode not in (MODE_STARATIO, MODE_STAPSRATIO):
        raise InvariantError(f"unknown static provisioning mode '{mode}'")
    validate_plan(plan, graph, catalog)
    stages = build_stages(plan, graph)
    cpu_type = catalog.cheapest_cpu_type()
    max_quota = max(t.quota for t in catalog.types)
    last_violation = None
    for g in range(1, max_quota + 1):
        counts = [
            cpu_per_gpu * g if catalog.types[s.type_id].is_cpu else g for s in stages
        ]
        gpu_units = sum(
            k for s, k in zip(stages, counts) if not catalog.types[s.type_id].is_cpu
        )
        ps = cpu_per_gpu * gpu_units if mode == MODE_STAPSRATIO else 0
        provisioning = make_provisioning(stages, counts, ps, cpu_type.id if ps else None)
        over_quota = any(
            total > catalog.types[t].quota
            for t, total in provisioning.per_type_totals.items()
        )
        if over_quota:
            break
        report = evaluate(plan, provisioning, graph, catalog, params)
        if report.feasible:
            return provisioning
        last_violation = report.violation
    raise InfeasibleError(
        "no ratio multiple within quota meets the throughput limit"
        + (f": {last_violation}" if last_violation else ""),
        gap=1.0,
    )


def provision(
    plan: SchedulingPlan,
    graph: ModelGraph,
    catalog: ResourceCatalog,
    params: JobParams,
    config: ProvisionerConfig = ProvisionerConfig(),
    mode: str = MODE_OPTIMAL,
    with_ps: bool = True,
) -> ProvisioningPlan:
    """Provision a plan in any mode; the scheduler-facing entry point.

    In ``optimal`` mode, parameter-server cores are added after the cost
    search when ``with_ps`` is set (static modes embed their own PS rule).
    """
    if mode == MODE_OPTIMAL:
        provisioning = optimize_k1(plan, graph, catalog, params, config)
        if with_ps:
            stages = build_stages(plan, graph)
            provisioning = add_ps_cores(provisioning, stages, catalog, config)
        return provisioning
    return static_provision(plan, graph, catalog, params, mode)
