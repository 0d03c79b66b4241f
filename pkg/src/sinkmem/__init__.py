"""Associative memory over weighted point clouds.

Patterns are finitely supported probability measures. Similarity is the
debiased entropic transport divergence; recall iterates a deterministic
transport-plus-reweighting update that descends the soft-minimum energy over
the stored patterns.
"""

from .measures import (
    DiscreteMeasure,
    DomainSpec,
    GeometryReport,
    MeasureParams,
    PatternBank,
    ValidationResult,
    domain_diameter,
    geometry_report,
    min_pairwise_distance,
    validate_measure,
)
from .sinkhorn import (
    Coupling,
    SelfPotential,
    SinkhornConfig,
    SinkhornSolution,
    barycentric_map,
    cost_matrix,
    coupling,
    dual_value,
    ot_cost,
    self_ot_cost,
    sinkhorn_divergence,
    sinkhorn_solve,
    soft_c_transform,
    symmetric_self_potential,
)
from .retrieval import (
    EnergyState,
    MatchResult,
    PotentialCache,
    RetrievalConfig,
    RetrievalError,
    RetrievalStep,
    RetrievalTrace,
    ShkGradient,
    energy_state,
    pattern_self_costs,
    retrieve,
    shk_grad,
    softmin_energy,
    success_metric,
    transport_step,
    weight_step,
    write_trace_csv,
)
from .sampling import (
    CapacityResult,
    ConfigurationError,
    SampleConfig,
    SeparationStats,
    TheoryConstants,
    capacity,
    sample_patterns,
    separation_stats,
    theory_constants,
)
from .baseline import (
    EuclideanTrace,
    VectorizedMeasure,
    devectorize,
    half_squared_distances,
    hopfield_step,
    retrieve_euclidean,
    vectorize,
    write_euclidean_trace_csv,
)
from .audits import (
    AuditReport,
    EtaRetResult,
    audit_descent_decay,
    audit_fd_gradients,
    audit_fixed_point,
    audit_grad_bound,
    audit_interference,
    audit_margin_separation,
    audit_mean_bound,
    audit_minimizer_proximity,
    audit_self_ot,
    audit_softmin_lipschitz,
    decay_instance,
    empirical_constants,
    eta_ret,
    suite_bounds,
    suite_descent_decay,
    suite_fixed_point,
    suite_gradients,
    suite_separation,
    summarize,
)
from .estimators import EuclideanHopfieldMemory, SinkhornShkMemory, as_measures
from .experiments import (
    ExperimentConfig,
    RunResult,
    build_bank,
    build_experiment1,
    build_experiment2,
    make_queries,
    run_experiment,
    run_repeats,
)

__version__ = "0.1.0"

__all__ = [
    "AuditReport",
    "CapacityResult",
    "ConfigurationError",
    "Coupling",
    "DiscreteMeasure",
    "DomainSpec",
    "EnergyState",
    "EtaRetResult",
    "EuclideanHopfieldMemory",
    "EuclideanTrace",
    "ExperimentConfig",
    "GeometryReport",
    "MatchResult",
    "MeasureParams",
    "PatternBank",
    "PotentialCache",
    "RetrievalConfig",
    "RetrievalError",
    "RetrievalStep",
    "RetrievalTrace",
    "RunResult",
    "SampleConfig",
    "SelfPotential",
    "SeparationStats",
    "ShkGradient",
    "SinkhornConfig",
    "SinkhornShkMemory",
    "SinkhornSolution",
    "TheoryConstants",
    "ValidationResult",
    "VectorizedMeasure",
    "as_measures",
    "audit_descent_decay",
    "audit_fd_gradients",
    "audit_fixed_point",
    "audit_grad_bound",
    "audit_interference",
    "audit_margin_separation",
    "audit_mean_bound",
    "audit_minimizer_proximity",
    "audit_self_ot",
    "audit_softmin_lipschitz",
    "barycentric_map",
    "build_bank",
    "build_experiment1",
    "build_experiment2",
    "capacity",
    "cost_matrix",
    "coupling",
    "decay_instance",
    "devectorize",
    "domain_diameter",
    "dual_value",
    "empirical_constants",
    "energy_state",
    "eta_ret",
    "geometry_report",
    "half_squared_distances",
    "hopfield_step",
    "make_queries",
    "min_pairwise_distance",
    "ot_cost",
    "pattern_self_costs",
    "retrieve",
    "retrieve_euclidean",
    "run_experiment",
    "run_repeats",
    "sample_patterns",
    "self_ot_cost",
    "separation_stats",
    "shk_grad",
    "sinkhorn_divergence",
    "sinkhorn_solve",
    "soft_c_transform",
    "softmin_energy",
    "success_metric",
    "suite_bounds",
    "suite_descent_decay",
    "suite_fixed_point",
    "suite_gradients",
    "suite_separation",
    "summarize",
    "symmetric_self_potential",
    "theory_constants",
    "transport_step",
    "validate_measure",
    "vectorize",
    "weight_step",
    "write_euclidean_trace_csv",
    "write_trace_csv",
]
