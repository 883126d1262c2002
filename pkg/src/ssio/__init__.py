"""Joint row selection and missing-value imputation for A- and D-optimal
designs by maximum-entropy deterministic annealing."""

from .annealer import (
    AnnealSchedule,
    AnnealState,
    anneal,
    anneal_states,
    free_energy,
    harden,
    impute_update_boxed,
    impute_update_unconstrained,
    initial_state,
    inner_fixed_point,
    mu_update,
    q_update,
    theorem1_check,
)
from .baselines import (
    MethodResult,
    brute_force_joint,
    brute_force_select,
    direct_joint,
    fedorov_exchange,
    mean_impute,
    project_capped_simplex,
    uniform_sample,
)
from .bench import TABLE1, InstanceSpec, RatioReport, emit_report, generate_instance, read_report, run_comparison
from .extensions import BudgetSpec, budget_q_update, constrained_anneal, d_anneal, eta_update
from .io import ParseError, parse_matrix, write_matrix
from .linalg import (
    HardDesign,
    IncompleteMatrix,
    InfeasibleError,
    RankDeficientError,
    SingularInformationError,
    a_cost,
    criterion_cost,
    d_cost,
    fisher_matrix,
    hard_cost,
    sensitivity,
)

__version__ = "0.1.0"
