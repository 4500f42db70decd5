"""Empirical Bayes factors for random effects from posterior draws.

The package covers the full pipeline: covariance structures for the prior
of a random-effect block (:mod:`ebfkit.covstruct`), the Savage-Dickey style
Bayes factor itself (:mod:`ebfkit.ebf_core`), draws/manifest file handling
and MCMC diagnostics (:mod:`ebfkit.posterior_io`), a Gibbs sampler for a
two-way crossed Gaussian model (:mod:`ebfkit.crossed_gibbs`) and a
replicated simulation-study harness (:mod:`ebfkit.sim_study`).
"""

from .covstruct import (
    BlockKronecker,
    Car,
    CovarianceStructure,
    DenseSymmetric,
    Diagonal,
    ScaledIdentity,
    VarianceParams,
    build_covariance,
    log_det,
    quadratic_form,
    validate_pd,
)
from .crossed_gibbs import (
    CrossedModelConfig,
    Dataset,
    GibbsConfig,
    available_backends,
    crossed_block_manifest,
    gibbs_fit,
    read_dataset,
    resolve_backend,
    simulate_dataset,
    write_dataset,
)
from .ebf_core import (
    VARIANT_FULL,
    VARIANT_MEAN,
    EbfResult,
    RandomEffectSummary,
    TauPosterior,
    gaussian_log_density_at_zero,
    log_ebf,
    log_ebf_joint,
    log_prior_density_at_zero_full,
    log_prior_density_at_zero_mean,
)
from .posterior_io import (
    BlockManifest,
    BlockSpec,
    DrawsMatrix,
    ess,
    load_manifest,
    pooled_ess,
    read_draws,
    save_manifest,
    summarize_block,
    write_draws,
    write_ebf_report,
)
from .sim_study import CellKey, CellSummary, SimStudyConfig, quantiles, run_cell, run_grid

__version__ = "0.1.0"

__all__ = [
    "BlockKronecker",
    "BlockManifest",
    "BlockSpec",
    "Car",
    "CellKey",
    "CellSummary",
    "CovarianceStructure",
    "CrossedModelConfig",
    "Dataset",
    "DenseSymmetric",
    "Diagonal",
    "DrawsMatrix",
    "EbfResult",
    "GibbsConfig",
    "RandomEffectSummary",
    "ScaledIdentity",
    "SimStudyConfig",
    "TauPosterior",
    "VARIANT_FULL",
    "VARIANT_MEAN",
    "VarianceParams",
    "available_backends",
    "build_covariance",
    "crossed_block_manifest",
    "ess",
    "gaussian_log_density_at_zero",
    "gibbs_fit",
    "load_manifest",
    "log_det",
    "log_ebf",
    "log_ebf_joint",
    "log_prior_density_at_zero_full",
    "log_prior_density_at_zero_mean",
    "pooled_ess",
    "quadratic_form",
    "quantiles",
    "read_dataset",
    "read_draws",
    "resolve_backend",
    "run_cell",
    "run_grid",
    "save_manifest",
    "simulate_dataset",
    "summarize_block",
    "validate_pd",
    "write_dataset",
    "write_draws",
    "write_ebf_report",
]
