"""Robust range-based network localization.

Builds the Huber convex underestimator of the robust localization cost,
minimizes it with a lockstep accelerated distributed method and an
asynchronous gossip method, certifies optimality gaps, and runs seeded
Monte Carlo experiments.
"""

from .async_solver import (
    ActivationSequence,
    AsyncState,
    async_cost,
    async_init,
    async_step,
    node_subproblem,
    run_async,
)
from .bounds import (
    GapCertificate,
    GridMinimum,
    apriori_gap_bound,
    grid_minimize_1d,
    one_dim_three_anchor_scenario,
    tight_gap_bound,
)
from .costs import (
    LossFamily,
    StackedVariables,
    ball_projection,
    convex_cost_f,
    cost_F,
    grad_F,
    gradient_mapping_norm,
    huber_loss,
    inner_minimized,
    nonconvex_cost_g,
    project_feasible,
    psi,
    sq_dist_ball,
    variational_inner_min,
)
from .harness import (
    ExperimentConfig,
    TrialResult,
    empirical_cdf,
    equal_load_compare,
    error_per_sensor,
    minimize_surrogate,
    run_montecarlo,
)
from .netmodel import (
    DEFAULT_COMM_RADIUS,
    DEFAULT_HUBER_RADIUS,
    IncidenceStructure,
    NetworkScenario,
    NoiseModel,
    ScenarioGenerationError,
    apply_noise,
    build_incidence,
    corner_anchors,
    generate_geometric_network,
    lipschitz_constant,
    load_scenario,
    save_scenario,
    true_distances,
)
from .results import RunResult, write_trace_csv
from .sync_solver import SyncState, run_sync, sync_init, sync_step

__version__ = "0.1.0"
