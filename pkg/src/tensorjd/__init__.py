"""CP tensor factorization by simultaneous diagonalization of random and plug-in projections."""
from .analysis import (
    Alignment,
    PerturbationEstimate,
    afsari_error_bound,
    align_factors,
    cardoso_error_prediction,
    incoherence,
    min_projection_count,
    modulus_of_uniqueness,
    theorem_error_bound,
)
from .baselines import als, tensor_power_method
from .factorize import (
    FactorizationReport,
    FactorizeOptions,
    ProjectionSet,
    factorize_asymmetric,
    factorize_fourth_order,
    make_projection_set,
    recover_weights,
    two_stage_factorize,
)
from .joint_diag import (
    DiagonalizationResult,
    DiagOptions,
    diagonalize,
    jacobi_diagonalize,
    off_objective,
    qrj1d_diagonalize,
)
from .moments import (
    Corpus,
    TopicModel,
    empirical_tensor,
    estimate_topic_model,
    generate_corpus,
    random_topic_model,
    topic_errors,
)
from .synthetic import derive_seed, random_model, random_noise
from .tensor import (
    CPModel,
    NoiseSpec,
    apply3,
    cp_to_tensor,
    generate_noise,
    make_rng,
    project,
    project4,
)

__version__ = "0.1.0"
