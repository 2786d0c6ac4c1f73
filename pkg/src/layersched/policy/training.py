"""Policy-gradient training of the scheduling policy.

Each round samples a batch of plans from the current policy, scores them
with the provisioner + cost model, and ascends the score-function gradient
of the expected reward, with a moving-average baseline subtracted from each
reward to cut variance. Reward is the negated monetary cost, so ascent
minimizes cost; infeasible plans contribute their penalty cost.

The baseline update after round i is ``b ← (1-γ)·b + (γ/G)·Σ R``; the
parameter update uses the baseline from before the round.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from ..costmodel import JobParams
from ..domain import ModelGraph, ResourceCatalog, SchedulingPlan
from ..errors import InvariantError, NumericError
from ..provisioner import ProvisionerConfig
from ..scoring import PlanScorer, ScoredPlan
from .features import FeatureNormalizer, encode_features, features_matrix
from .network import (
    CELL_ELMAN,
    CELL_LSTM,
    PolicyParams,
    entropy_of,
    init_params,
    policy_backward,
    policy_forward,
    sample_actions,
)

CHECKPOINT_VERSION = 1

# safety cap on a single round's parameter step; ordinary updates stay far
# below it
UPDATE_NORM_CAP = 50.0

# an infeasible plan's penalty reward is orders of magnitude beyond real
# costs; its advantage is winsorized to this multiple of the round's largest
# feasible advantage so one sample cannot drown the round's signal (no-op
# for rounds where every sampled plan is feasible)
PENALTY_ADVANTAGE_FACTOR = 10.0


@dataclass(frozen=True)
class TrainerConfig:
    """Hyperparameters of the policy-gradient trainer.

    ``rounds`` is the number of update rounds, ``plans_per_round`` the batch
    of plans sampled and scored each round, ``baseline_rate`` the moving
    average rate of the reward baseline.
    """

    rounds: int = 200
    plans_per_round: int = 20
    baseline_rate: float = 0.7
    learning_rate: float = 0.01
    hidden_size: int = 64
    seed: int = 0
    temperature: float = 1.0
    init_scale: float = 0.1
    max_layers: int = 64
    cell: str = CELL_LSTM
    warmup_rounds: int = 0

    def __post_init__(self):
        if not 0.0 < self.baseline_rate <= 1.0:
            raise InvariantError("baseline_rate must be in (0, 1]")
        if self.learning_rate <= 0:
            raise InvariantError("learning_rate must be > 0")
        if self.plans_per_round < 1:
            raise InvariantError("plans_per_round must be >= 1")
        if self.rounds < 0:
            raise InvariantError("rounds must be >= 0")
        if self.warmup_rounds < 0:
            raise InvariantError("warmup_rounds must be >= 0")
        if self.cell not in (CELL_LSTM, CELL_ELMAN):
            raise InvariantError(f"unknown cell kind '{self.cell}'")


@dataclass(frozen=True)
class EpisodeTrace:
    """One sampled plan with its action log-probabilities and reward."""

    plan: SchedulingPlan
    log_probs: np.ndarray
    reward: float
    entropy: float


@dataclass(frozen=True)
class RoundStats:
    round: int
    mean_cost: float
    best_cost: float
    baseline: float
    entropy: float


@dataclass
class TrainingResult:
    params: PolicyParams
    normalizer: FeatureNormalizer
    history: list[RoundStats] = field(default_factory=list)
    best: ScoredPlan | None = None


def reward(scored: ScoredPlan) -> float:
    """Negated cost, so that gradient ascent minimizes cost."""
    return -scored.cost


def policy_gradient(
    params: PolicyParams,
    features: np.ndarray,
    traces: list[EpisodeTrace],
    baseline: float,
    temperature: float = 1.0,
) -> PolicyParams:
    """Score-function gradient averaged over traces.

    Computes ``(1/G) Σ_g (R_g − b) · ∇ Σ_t log P(a_t)`` by one shared
    forward pass (the action distributions do not depend on sampled
    actions) and one backward pass over the combined logit gradient.
    """
    if not traces:
        raise InvariantError("policy_gradient needs at least one trace")
    probs, cache = policy_forward(params, features, temperature)
    num_layers, num_types = probs.shape
    dlogits = np.zeros_like(probs)
    scale = 1.0 / len(traces)
    for trace in traces:
        weight = (trace.reward - baseline) * scale
        onehot = np.zeros((num_layers, num_types))
        onehot[np.arange(num_layers), list(trace.plan.assignment)] = 1.0
        dlogits += weight * (onehot - probs) / temperature
    return policy_backward(params, cache, dlogits)


def init_policy(
    graph: ModelGraph, catalog: ResourceCatalog, config: TrainerConfig
) -> tuple[PolicyParams, FeatureNormalizer]:
    """Fit the feature normalizer and randomly initialize matching weights."""
    normalizer = FeatureNormalizer.fit(graph, catalog, max_layers=config.max_layers)
    rng = np.random.default_rng([config.seed, 0])
    params = init_params(
        cell=config.cell,
        feature_dim=normalizer.feature_dim,
        num_types=catalog.num_types,
        hidden_size=config.hidden_size,
        init_scale=config.init_scale,
        rng=rng,
    )
    return params, normalizer


def train(
    graph: ModelGraph,
    catalog: ResourceCatalog,
    params0: PolicyParams,
    config: TrainerConfig,
    job: JobParams,
    provisioner_config: ProvisionerConfig = ProvisionerConfig(),
    score_fn: Callable[[SchedulingPlan], ScoredPlan] | None = None,
) -> TrainingResult:
    """Run the training loop; ``params0`` is copied, never mutated.

    ``score_fn`` defaults to the model-based scorer (provision + evaluate);
    injecting a different callable allows rewards from other sources, e.g.
    measured throughput.
    """
    normalizer = FeatureNormalizer.fit(graph, catalog, max_layers=config.max_layers)
    features = features_matrix(encode_features(graph, catalog, normalizer))
    if score_fn is None:
        score_fn = PlanScorer(graph, catalog, job, provisioner_config)
    params = params0.copy()
    result = TrainingResult(params=params, normalizer=normalizer)
    rng = np.random.default_rng([config.seed, 1])
    baseline = 0.0
    g = config.plans_per_round
    num_types = catalog.num_types
    for round_index in range(1, config.rounds + 1):
        probs, _ = policy_forward(params, features, config.temperature)
        round_entropy = entropy_of(probs)
        # pre-training rounds draw the plan batch uniformly at random, so
        # the policy anchors on the cheap region of the whole space before
        # on-policy rounds refine it
        warming = round_index <= config.warmup_rounds
        traces: list[EpisodeTrace] = []
        costs: list[float] = []
        feasible_flags: list[bool] = []
        for _ in range(g):
            if warming:
                actions = rng.integers(0, num_types, graph.num_layers)
                log_probs = np.log(
                    np.maximum(probs[np.arange(graph.num_layers), actions], 1e-300)
                )
            else:
                actions, log_probs = sample_actions(probs, rng)
            plan = SchedulingPlan(tuple(actions))
            scored = score_fn(plan)
            costs.append(scored.cost)
            feasible_flags.append(scored.feasible)
            traces.append(
                EpisodeTrace(
                    plan=plan,
                    log_probs=log_probs,
                    reward=reward(scored),
                    entropy=round_entropy,
                )
            )
            if result.best is None or scored.cost < result.best.cost:
                result.best = scored
        if not all(feasible_flags):
            spread = [
                abs(t.reward - baseline)
                for t, ok in zip(traces, feasible_flags)
                if ok
            ]
            unit = PENALTY_ADVANTAGE_FACTOR * (max(spread) if spread else 1.0)
            bad = [t.reward for t, ok in zip(traces, feasible_flags) if not ok]
            lo, hi = min(bad), max(bad)
            adjusted = []
            for t, ok in zip(traces, feasible_flags):
                if ok:
                    adjusted.append(t)
                    continue
                # map penalties into [b-2u, b-u] preserving their order, so
                # infeasible plans stay strictly worse than feasible ones
                # but still rank against each other by violation size
                z = 0.5 if hi == lo else (t.reward - lo) / (hi - lo)
                adjusted.append(replace(t, reward=baseline - unit * (2.0 - z)))
            traces = adjusted
        # the reward spread shrinks by orders of magnitude as the policy
        # concentrates; standardizing each round's advantages keeps early
        # coarse rounds from saturating the softmax and late fine rounds
        # from stalling (equivalent to a per-round learning-rate schedule)
        spread = float(np.std([t.reward - baseline for t in traces]))
        if spread > 1e-12:
            gradient_traces = [
                replace(t, reward=baseline + (t.reward - baseline) / spread)
                for t in traces
            ]
        else:
            gradient_traces = traces
        grads = policy_gradient(
            params, features, gradient_traces, baseline, config.temperature
        )
        scale = config.learning_rate
        update_norm = scale * float(np.linalg.norm(grads.flat()))
        if update_norm > UPDATE_NORM_CAP:
            scale *= UPDATE_NORM_CAP / update_norm
        params.add_scaled(grads, scale)
        if not params.all_finite():
            raise NumericError(f"parameters diverged at round {round_index}")
        mean_reward = float(np.mean([t.reward for t in traces]))
        baseline = (1.0 - config.baseline_rate) * baseline + config.baseline_rate * mean_reward
        result.history.append(
            RoundStats(
                round=round_index,
                mean_cost=float(np.mean(costs)),
                best_cost=result.best.cost,
                baseline=baseline,
                entropy=round_entropy,
            )
        )
    return result


def save_checkpoint(
    path,
    params: PolicyParams,
    normalizer: FeatureNormalizer,
    config: TrainerConfig,
) -> None:
    """Serialize policy weights, normalizer, and config as versioned JSON."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "params": {
            "cell": params.cell,
            "hidden_size": params.hidden_size,
            "w_cell": params.w_cell.tolist(),
            "b_cell": params.b_cell.tolist(),
            "w_out": params.w_out.tolist(),
            "b_out": params.b_out.tolist(),
        },
        "normalizer": {
            "max_layers": normalizer.max_layers,
            "kinds": list(normalizer.kinds),
            "means": list(normalizer.means),
            "stds": list(normalizer.stds),
        },
        "config": {
            "rounds": config.rounds,
            "plans_per_round": config.plans_per_round,
            "baseline_rate": config.baseline_rate,
            "learning_rate": config.learning_rate,
            "hidden_size": config.hidden_size,
            "seed": config.seed,
            "temperature": config.temperature,
            "init_scale": config.init_scale,
            "max_layers": config.max_layers,
            "cell": config.cell,
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_checkpoint(path) -> tuple[PolicyParams, FeatureNormalizer, TrainerConfig]:
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != CHECKPOINT_VERSION:
        raise InvariantError(
            f"unsupported checkpoint version {payload.get('version')!r}"
        )
    p = payload["params"]
    params = PolicyParams(
        cell=p["cell"],
        w_cell=np.array(p["w_cell"], dtype=float),
        b_cell=np.array(p["b_cell"], dtype=float),
        w_out=np.array(p["w_out"], dtype=float),
        b_out=np.array(p["b_out"], dtype=float),
        hidden_size=int(p["hidden_size"]),
    )
    n = payload["normalizer"]
    normalizer = FeatureNormalizer(
        max_layers=int(n["max_layers"]),
        kinds=tuple(n["kinds"]),
        means=tuple(n["means"]),
        stds=tuple(n["stds"]),
    )
    config = TrainerConfig(**payload["config"])
    return params, normalizer, config
