"""layersched: cost-optimal scheduling of DNN layers onto heterogeneous
compute resources under a throughput constraint.

The library models a training pipeline analytically (Amdahl-style per-stage
times, bottleneck throughput, monetary cost), provisions per-stage resource
counts for load balance, and searches the layer-to-resource-type assignment
space with brute force, heuristics, a genetic algorithm, and a recurrent
policy trained by policy gradients.
"""

from .baselines import (
    GeneticConfig,
    brute_force,
    genetic,
    greedy,
    heuristic_first_layer,
    homogeneous,
    random_search,
)
from .costmodel import (
    JobParams,
    compute_ct,
    compute_dt,
    evaluate,
    monetary_cost,
    pipeline_throughput,
    stage_exec_time,
    stage_throughput,
    total_exec_time,
)
from .domain import (
    CostReport,
    LayerSpec,
    ModelGraph,
    ProvisioningPlan,
    ResourceCatalog,
    ResourceType,
    SchedulingPlan,
    Stage,
    build_stages,
    make_provisioning,
    validate_plan,
)
from .errors import (
    ConfigError,
    InfeasibleError,
    InvariantError,
    NumericError,
    ParseError,
    PlanValidationError,
    SchedulerError,
)
from .fileio import (
    load_bundled_catalog,
    load_bundled_graph,
    load_catalog,
    load_model_graph,
    save_catalog,
    save_model_graph,
)
from .provisioner import (
    ProvisionerConfig,
    add_ps_cores,
    derive_ki,
    min_k1,
    optimize_k1,
    provision,
    static_provision,
)
from .scoring import PlanScorer, ScoredPlan

__version__ = "0.1.0"
