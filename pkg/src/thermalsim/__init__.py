"""Collision-model simulator for dissipative quantum thermal state preparation."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConvergenceFailure,
    InvariantViolation,
    ThermalsimError,
)
from .operators import (
    DensityMatrix,
    HermitianOperator,
    SpectralSystem,
    build_mixed_field_ising,
    gibbs_state,
    bohr_project,
    site_operator,
    spectral_decompose,
)
from .sampler import (
    GaussianFilter,
    JumpSet,
    LindbladGenerator,
    Superoperator,
    assemble_generator,
    build_coherent_db,
    build_coherent_ls,
    build_jump_operators,
    choi_to_kraus,
    filter_fourier,
    filter_l1_norm,
    filter_value,
    jump_weight,
    kms_residual,
    kraus_to_superoperator,
    mixed_field_jumps,
    superoperator_to_choi,
    to_superoperator,
    unvec,
    vec,
)
from .collision import (
    KrausChannel,
    MixtureChannel,
    ProtocolParams,
    bath_gibbs_weights,
    channel_averaged,
    channel_kls,
    channel_randomized_bath,
    channel_single,
    channel_table,
    free_unitary,
    propagate_columns,
    quadrature_shifts,
    system_bath_hamiltonian,
)
from .analysis import (
    BoundTerm,
    GapReport,
    LemmaReport,
    ResonanceSolution,
    SigmaCorrection,
    approximate_fixed_point,
    fixed_point,
    lemma_inequality_check,
    resonance_solve,
    spectral_gap,
    theorem1_terms,
    trace_distance,
)
from .trajectories import (
    ContractionFit,
    RandomSequence,
    TrajectoryEnsemble,
    VarianceReport,
    derive_seed,
    ensemble_stats,
    fit_contraction,
    randomized_bath_ensemble,
    run_trajectory,
    sample_sequence,
    splitmix64,
    variance_bound,
)
from .config import ExperimentConfig, build_config, parse_config_file
from .experiments import experiment_names, run_experiment
