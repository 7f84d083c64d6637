"""Gaussian-process emulators for simulators with spatial output.

Principal-component and thin-plate-regression-spline bases reduce each
simulator run to a handful of coefficients, which are then modelled as
Gaussian processes over the inputs with either independent or separable
covariance. A separable GP over inputs x locations is included as a
benchmark.
"""

from .basis import (
    BasisSet,
    OutputGrid,
    lattice_grid,
    pca_basis,
    project_coefficients,
    reconstruct,
    sublattice_index,
    tprs_basis,
    tprs_eta,
    tprs_scale_matrix,
)
from .design import (
    InputRanges,
    StandardizationParams,
    maximin_lhs,
    monte_carlo_sample,
    standardize,
)
from .emulators import (
    EmulatorModel,
    MCMCConfig,
    PredictiveDistribution,
    estimate_sigma2,
    fit_itprs,
    fit_pcgp,
    fit_sgp,
    fit_stprs,
    load_model,
    predict,
    save_model,
)
from .errors import (
    EmulatorError,
    InputError,
    NumericalError,
    ParameterError,
    ResourceError,
    StateError,
    UpdateFailedError,
)
from .linalg import (
    CorrelationParams,
    SpatialCorrelationParams,
    correlation_matrix,
    kronecker_product,
    sqexp_correlation,
    woodbury_block_update,
)
from .mcmc import (
    ChainState,
    CoefficientPosterior,
    PosteriorSamples,
    PriorConfig,
    itprs_log_posterior,
    metropolis_chain,
    prior_log_density,
)
from .simulator import SimDataset, SpillConfig, generate_dataset, pollutant_concentration

__version__ = "0.1.0"
