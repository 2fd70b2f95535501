"""defectsim: deterministic federated-optimization runs under rational
agent defection, with a counterexample catalog and guarantee-level audits."""

from .core import (
    AgentObjective,
    AgentState,
    CaseLabel,
    DefectSimError,
    DegenerateUpdateError,
    DimensionMismatchError,
    InvalidInputError,
    NonFiniteOracleError,
    OracleOutput,
    Outcome,
    OutcomeKind,
    Point,
    PreconditionError,
    ProblemInstance,
    RoundRecord,
    Trace,
    average_loss,
    evaluate_oracle,
    wants_to_defect,
)
from .algorithms import (
    AggregationRule,
    RunConfig,
    StepResult,
    ada_gd_step,
    predict_sets,
    problem_step_size_bound,
    run_ada_gd,
    run_by_id,
    run_fedavg,
    run_icfo,
    step_size_bound,
)
from .analysis import (
    AuditCheck,
    AuditReport,
    DefectionClass,
    classify_defections,
    find_harmful_step_scale,
    probe_bad_region,
    run_standard_audits,
)
from .cli import ExperimentConfig
from .problems import (
    DataProblem,
    LabeledDataset,
    get_problem,
    make_bad_region_example,
    make_benign_example,
    make_linear_regression,
    make_nonhetero_bad_example,
    make_random_quadratics,
    make_uniform_agg_family,
    partition_heterogeneity,
    smooth_abs,
    smooth_hinge,
    validate_assumptions,
)

__version__ = "0.1.0"
