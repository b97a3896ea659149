"""Random walks on nilpotent covering graphs.

Computes the discrete-geometric invariants of a finite quotient graph with
group-valued edge voltages (invariant measure, homological and asymptotic
direction, modified harmonic realization, Albanese matrices), simulates the
lifted walk and its scaled path processes, evaluates moderate-deviation rate
functions, and drives desk-scale experiments for the limit theorems.
"""

from .albanese import (
    AlbaneseData,
    Realization,
    albanese_matrix,
    albanese_pipeline,
    asymptotic_direction,
    clt_covariance_oracle,
    corrector,
    first_layer_form,
    harmonicity_residual,
    modified_harmonic_realization,
    realization_from_first_layer,
)
from .algebra import (
    StratifiedAlgebra,
    abelian_algebra,
    algebra_norm,
    bch_product,
    dilate_group,
    dilate_vector,
    finsler_distance,
    group_inverse,
    heisenberg_algebra,
    limit_bracket,
    limit_product,
    to_limit_group,
)
from .experiments import (
    ExperimentConfig,
    RUNNERS,
    graph_from_dict,
    graph_to_dict,
    ingest_graph,
    load_graph,
    run_albanese,
    run_clt,
    run_lil,
    run_lln,
    run_mdp,
    run_rate,
)
from .graph import (
    HomologyBasis,
    InvariantMeasure,
    OneChain,
    PRESETS,
    VoltageGraph,
    cycle_basis,
    heisenberg_cayley,
    hexagonal,
    homological_direction,
    invariant_measure,
    is_symmetric,
    validate,
    z1_biased,
    z1_subdivided,
    zd_lattice,
)
from .lattice import ExactLatticeDistribution, gaussian_tail_exponent, mdp_rate
from .rates import (
    PiecewisePath,
    QuadraticForms,
    RateBound,
    alpha,
    alpha_star,
    develop,
    develop_limit,
    endpoint_rate,
    finite_dim_rate,
    lil_ball_contains,
    limit_rate,
    minimize_endpoint_rate,
    path_from_increments,
    path_rate,
    straight_path,
)
from .walk import (
    InterpolatedPath,
    ScalingSequence,
    WalkPath,
    batch_centered_sums,
    batch_endpoints,
    custom_scaling,
    endpoints_csv_rows,
    interpolate,
    lil_scaling,
    power_scaling,
    sample_path,
    sample_stream,
    scaled_endpoint,
    trajectory_scan,
)

__all__ = [
    "AlbaneseData",
    "ExactLatticeDistribution",
    "ExperimentConfig",
    "HomologyBasis",
    "InterpolatedPath",
    "InvariantMeasure",
    "OneChain",
    "PRESETS",
    "PiecewisePath",
    "QuadraticForms",
    "RUNNERS",
    "RateBound",
    "Realization",
    "ScalingSequence",
    "StratifiedAlgebra",
    "VoltageGraph",
    "WalkPath",
    "abelian_algebra",
    "albanese_matrix",
    "albanese_pipeline",
    "algebra_norm",
    "alpha",
    "alpha_star",
    "asymptotic_direction",
    "batch_centered_sums",
    "batch_endpoints",
    "bch_product",
    "clt_covariance_oracle",
    "corrector",
    "custom_scaling",
    "cycle_basis",
    "develop",
    "develop_limit",
    "dilate_group",
    "dilate_vector",
    "endpoint_rate",
    "endpoints_csv_rows",
    "finite_dim_rate",
    "finsler_distance",
    "first_layer_form",
    "gaussian_tail_exponent",
    "graph_from_dict",
    "graph_to_dict",
    "group_inverse",
    "harmonicity_residual",
    "heisenberg_algebra",
    "heisenberg_cayley",
    "hexagonal",
    "homological_direction",
    "ingest_graph",
    "interpolate",
    "invariant_measure",
    "is_symmetric",
    "lil_ball_contains",
    "lil_scaling",
    "limit_bracket",
    "limit_product",
    "limit_rate",
    "load_graph",
    "mdp_rate",
    "minimize_endpoint_rate",
    "modified_harmonic_realization",
    "path_from_increments",
    "path_rate",
    "power_scaling",
    "realization_from_first_layer",
    "run_albanese",
    "run_clt",
    "run_lil",
    "run_lln",
    "run_mdp",
    "run_rate",
    "sample_path",
    "sample_stream",
    "scaled_endpoint",
    "straight_path",
    "to_limit_group",
    "trajectory_scan",
    "validate",
    "z1_biased",
    "z1_subdivided",
    "zd_lattice",
]
