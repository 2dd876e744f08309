"""Agreement between paired areal sequences via a bivariate CAR model.

Quantifies how well two measurement methods agree when both are observed on
the same lattice of areal units: a GMCAR process models the paired field,
Bayesian MCMC fits it, and the spatial concordance coefficient (a weighted
multivariate generalization of the classical concordance correlation)
summarizes agreement with full posterior uncertainty.
"""

from .concordance import (
    ConcordanceWeights,
    LinInputs,
    lin_concordance,
    mc_concordance_oracle,
    multivariate_concordance,
    spatial_concordance,
)
from .errors import (
    ChainInitError,
    DataFormatError,
    DegenerateInputError,
    InvalidParameterError,
    IsolatedUnitError,
    LatticeError,
    SingularDesignError,
)
from .estimator import GMCARConcordance
from .gmcar import (
    CARSpec,
    CovarianceBlocks,
    GMCARParams,
    car_precision,
    covariance_blocks,
    joint_covariance,
    linking_matrix,
    log_density,
    sample,
)
from .lattice import (
    ContiguityMatrix,
    DegreeMatrix,
    Lattice,
    build_contiguity,
    degree_matrix,
    grid_lattice,
    higher_order_contiguity,
    load_adjacency,
)
from .mcmc import (
    ChainConfig,
    PosteriorDraws,
    PriorSpec,
    dic,
    gelman_rubin,
    hpd_interval,
    log_posterior,
    log_prior,
    plugin_coefficient_draws,
    run_chain,
    summarize_draws,
)
from .survey import (
    FinitePopulation,
    SAEInputs,
    SurveySample,
    fit_beta,
    ht_mean,
    ht_total,
    sae_composite,
    synthetic_rate,
)

__version__ = "0.1.0"
