"""Command-line harness.

Exit codes: 0 success, 2 infeasible, 3 configuration error, 4 numeric
failure. Every subcommand takes the instance as ``--model`` and ``--catalog``
JSON files plus ``--throughput-limit``; results go to ``--out``.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .baselines import GeneticConfig
from .costmodel import JobParams, evaluate
from .domain import build_stages
from .errors import (
    ConfigError,
    InfeasibleError,
    InvariantError,
    NumericError,
    ParseError,
    PlanValidationError,
    SchedulerError,
)
from .experiments import (
    METHODS,
    ExperimentConfig,
    load_experiment_config,
    provisioning_study,
    read_plan_file,
    run_experiment,
    run_method,
    scaling_study,
    write_plan_file,
)
from .fileio import load_catalog, load_model_graph
from .policy import (
    TrainerConfig,
    encode_features,
    features_matrix,
    greedy_plan,
    init_policy,
    save_checkpoint,
    train,
)
from .provisioner import MODE_OPTIMAL, PROVISIONING_MODES, ProvisionerConfig, provision
from .scoring import PlanScorer

EXIT_INFEASIBLE = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InfeasibleError as exc:
            click.echo(f"infeasible: {exc}", err=True)
            sys.exit(EXIT_INFEASIBLE)
        except (ConfigError, ParseError, InvariantError, PlanValidationError) as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except NumericError as exc:
            click.echo(f"numeric failure: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)
        except SchedulerError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _instance_options(fn):
    fn = click.option("--model", "model_path", required=True, type=click.Path())(fn)
    fn = click.option("--catalog", "catalog_path", required=True, type=click.Path())(fn)
    fn = click.option("--throughput-limit", type=float, required=True)(fn)
    return fn


def _load_instance(model_path, catalog_path, throughput_limit):
    graph = load_model_graph(model_path)
    catalog = load_catalog(catalog_path)
    return graph, catalog, JobParams(throughput_limit)


@click.group()
def main():
    """Schedule model layers onto heterogeneous resources at minimum cost."""


@main.command("evaluate")
@_instance_options
@click.option("--plan", "plan_path", required=True, type=click.Path())
@click.option("--out", type=click.Path(), default=None)
@_exit_codes
def evaluate_cmd(model_path, catalog_path, throughput_limit, plan_path, out):
    """Evaluate a plan file (provisioning it first when the file has none)."""
    graph, catalog, job = _load_instance(model_path, catalog_path, throughput_limit)
    plan, provisioning = read_plan_file(plan_path)
    if provisioning is None:
        provisioning = provision(plan, graph, catalog, job)
    report = evaluate(plan, provisioning, graph, catalog, job)
    summary = {
        "assignment": list(plan.assignment),
        "stages": len(build_stages(plan, graph)),
        "per_stage_k": list(provisioning.per_stage_k),
        "ps_cores": provisioning.ps_cores,
        "pipeline_throughput": report.pipeline_throughput,
        "total_exec_time_s": report.total_exec_time,
        "monetary_cost": report.monetary_cost,
        "feasible": report.feasible,
        "violation": report.violation,
    }
    click.echo(json.dumps(summary, indent=2))
    if out:
        Path(out).write_text(json.dumps(summary, indent=2) + "\n")
    if not report.feasible:
        sys.exit(EXIT_INFEASIBLE)


@main.command("provision")
@_instance_options
@click.option("--plan", "plan_path", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(PROVISIONING_MODES), default=MODE_OPTIMAL)
@click.option("--ps/--no-ps", "with_ps", default=True, help="Add parameter-server cores (optimal mode).")
@click.option("--ps-ratio", type=float, default=6.0)
@click.option("--out", type=click.Path(), default=None)
@_exit_codes
def provision_cmd(model_path, catalog_path, throughput_limit, plan_path, mode, with_ps, ps_ratio, out):
    """Compute per-stage resource counts for a plan."""
    graph, catalog, job = _load_instance(model_path, catalog_path, throughput_limit)
    plan, _ = read_plan_file(plan_path)
    config = ProvisionerConfig(ps_cores_per_gpu=ps_ratio)
    provisioning = provision(plan, graph, catalog, job, config, mode=mode, with_ps=with_ps)
    report = evaluate(plan, provisioning, graph, catalog, job)
    summary = {
        "mode": mode,
        "per_stage_k": list(provisioning.per_stage_k),
        "ps_cores": provisioning.ps_cores,
        "per_type_totals": {str(t): n for t, n in sorted(provisioning.per_type_totals.items())},
        "pipeline_throughput": report.pipeline_throughput,
        "monetary_cost": report.monetary_cost,
        "feasible": report.feasible,
    }
    click.echo(json.dumps(summary, indent=2))
    if out:
        Path(out).write_text(json.dumps(summary, indent=2) + "\n")


@main.command("schedule")
@click.argument("method", type=click.Choice(METHODS))
@_instance_options
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), default=None)
@click.option("--budget", type=int, default=256, help="Random-search budget.")
@click.option("--invert", is_flag=True, help="Invert the first-layer heuristic.")
@click.option("--rounds", type=int, default=None, help="Policy training rounds.")
@click.option("--population", type=int, default=None, help="Genetic population size.")
@click.option("--generations", type=int, default=None, help="Genetic generations.")
@_exit_codes
def schedule_cmd(method, model_path, catalog_path, throughput_limit, seed, out,
                 budget, invert, rounds, population, generations):
    """Run one scheduling method and print its plan and cost."""
    graph, catalog, job = _load_instance(model_path, catalog_path, throughput_limit)
    method_configs: dict = {}
    if method == "random":
        method_configs["random"] = {"budget": budget}
    if method == "heuristic" and invert:
        method_configs["heuristic"] = {"invert": True}
    if method == "genetic":
        overrides = {}
        if population is not None:
            overrides["population"] = population
        if generations is not None:
            overrides["generations"] = generations
        method_configs["genetic"] = overrides
    if method in ("rl-lstm", "rl-rnn") and rounds is not None:
        method_configs[method] = {"rounds": rounds}
    scored = run_method(method, graph, catalog, job, seed, method_configs)
    click.echo(
        json.dumps(
            {
                "method": method,
                "assignment": list(scored.plan.assignment),
                "cost": scored.cost,
                "feasible": scored.feasible,
                "evaluations": scored.evaluations,
            },
            indent=2,
        )
    )
    if out:
        write_plan_file(out, graph, scored)
    if not scored.feasible:
        sys.exit(EXIT_INFEASIBLE)


@main.command("train-policy")
@_instance_options
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), default="policy-out")
@click.option("--rounds", type=int, default=200)
@click.option("--plans-per-round", type=int, default=20)
@click.option("--learning-rate", type=float, default=0.01)
@click.option("--baseline-rate", type=float, default=0.7)
@click.option("--hidden-size", type=int, default=64)
@click.option("--temperature", type=float, default=1.0)
@click.option("--cell", type=click.Choice(["lstm", "elman"]), default="lstm")
@_exit_codes
def train_policy_cmd(model_path, catalog_path, throughput_limit, seed, out_dir,
                     rounds, plans_per_round, learning_rate, baseline_rate,
                     hidden_size, temperature, cell):
    """Train the recurrent scheduling policy; writes checkpoint, log, plan."""
    graph, catalog, job = _load_instance(model_path, catalog_path, throughput_limit)
    config = TrainerConfig(
        rounds=rounds,
        plans_per_round=plans_per_round,
        learning_rate=learning_rate,
        baseline_rate=baseline_rate,
        hidden_size=hidden_size,
        seed=seed,
        temperature=temperature,
        cell=cell,
    )
    params0, _ = init_policy(graph, catalog, config)
    result = train(graph, catalog, params0, config, job)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.json", result.params, result.normalizer, config)
    with open(out / "training_log.csv", "w") as handle:
        handle.write("round,mean_cost,best_cost,baseline_b,entropy\n")
        for s in result.history:
            handle.write(
                f"{s.round},{s.mean_cost!r},{s.best_cost!r},{s.baseline!r},{s.entropy!r}\n"
            )
    features = features_matrix(encode_features(graph, catalog, result.normalizer))
    final = greedy_plan(result.params, features)
    scored = PlanScorer(graph, catalog, job)(final)
    write_plan_file(out / "best_plan.json", graph, scored)
    click.echo(
        json.dumps(
            {
                "rounds": rounds,
                "final_assignment": list(final.assignment),
                "final_cost": scored.cost,
                "feasible": scored.feasible,
                "checkpoint": str(out / "checkpoint.json"),
            },
            indent=2,
        )
    )
    if not scored.feasible:
        sys.exit(EXIT_INFEASIBLE)


@main.command("compare")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--model", "model_path", type=click.Path(), default=None)
@click.option("--catalog", "catalog_path", type=click.Path(), default=None)
@click.option("--throughput-limit", type=float, default=None)
@click.option("--methods", default=None, help="Comma-separated method names.")
@click.option("--seeds", default="0", help="Comma-separated seeds.")
@click.option("--out", "out_dir", type=click.Path(), default="results")
@_exit_codes
def compare_cmd(config_path, model_path, catalog_path, throughput_limit, methods, seeds, out_dir):
    """Run several methods and write comparison.csv plus plot data."""
    if config_path:
        config = load_experiment_config(config_path)
    else:
        if not (model_path and catalog_path and throughput_limit and methods):
            raise ConfigError(
                "compare needs --config, or --model/--catalog/--throughput-limit/--methods"
            )
        config = ExperimentConfig(
            model=model_path,
            catalog=catalog_path,
            throughput_limit=throughput_limit,
            methods=tuple(m.strip() for m in methods.split(",") if m.strip()),
            seeds=tuple(int(s) for s in seeds.split(",")),
            out_dir=out_dir,
        )
    rows = run_experiment(config)
    for row in rows:
        status = "ok" if row.feasible else (row.error or "infeasible")
        cost = f"{row.cost:.6g}" if row.cost is not None else "-"
        click.echo(f"{row.method:10s} seed={row.seed} cost={cost} [{status}]")
    click.echo(f"wrote {Path(config.out_dir) / 'comparison.csv'}")


@main.command("scaling-study")
@_instance_options
@click.option("--layers", default="8,12,16,20", help="Comma-separated layer counts.")
@click.option("--types", default="2,4", help="Comma-separated type counts.")
@click.option("--bf-time-cap", type=float, default=60.0)
@click.option("--rl-rounds", type=int, default=30)
@click.option("--out", "out_dir", type=click.Path(), default="results")
@_exit_codes
def scaling_study_cmd(model_path, catalog_path, throughput_limit, layers, types,
                      bf_time_cap, rl_rounds, out_dir):
    """Measure brute-force blow-up vs. policy scheduling time."""
    graph, catalog, job = _load_instance(model_path, catalog_path, throughput_limit)
    rows = scaling_study(
        [int(x) for x in layers.split(",")],
        [int(x) for x in types.split(",")],
        graph,
        catalog,
        job,
        rl_config=TrainerConfig(rounds=rl_rounds, plans_per_round=16),
        bf_time_cap_s=bf_time_cap,
        out_dir=out_dir,
    )
    for row in rows:
        mark = " (estimated)" if row.bf_estimated else ""
        click.echo(
            f"L={row.layers:3d} T={row.types} enum={row.enumerations:>12d} "
            f"bf={row.bf_wall_s:.3f}s{mark} rl={row.rl_wall_s:.3f}s"
        )
    click.echo(f"wrote {Path(out_dir) / 'scaling.csv'}")


@main.command("provisioning-study")
@_instance_options
@click.option("--plan", "plan_path", type=click.Path(), default=None,
              help="Plan file; when omitted, --method generates the plan.")
@click.option("--method", "method", type=click.Choice(METHODS), default="rl-lstm")
@click.option("--seed", type=int, default=0)
@click.option("--rl-rounds", type=int, default=60)
@click.option("--out", "out_dir", type=click.Path(), default="results")
@_exit_codes
def provisioning_study_cmd(model_path, catalog_path, throughput_limit, plan_path,
                           method, seed, rl_rounds, out_dir):
    """Compare optimal vs. static provisioning on one fixed plan."""
    graph, catalog, job = _load_instance(model_path, catalog_path, throughput_limit)
    if plan_path:
        plan, _ = read_plan_file(plan_path)
    else:
        method_configs = {}
        if method in ("rl-lstm", "rl-rnn"):
            method_configs[method] = {"rounds": rl_rounds}
        plan = run_method(method, graph, catalog, job, seed, method_configs).plan
    rows = provisioning_study(plan, graph, catalog, job, out_dir=out_dir)
    for row in rows:
        cost = f"{row.cost:.6g}" if row.cost is not None else "-"
        click.echo(f"{row.mode:12s} cost={cost} feasible={row.feasible}")
    click.echo(f"wrote {Path(out_dir) / 'provisioning.csv'}")


if __name__ == "__main__":
    main()
