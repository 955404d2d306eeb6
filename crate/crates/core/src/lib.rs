//! Mass imputation for combining a non-probability sample with a
//! probability survey sample.
//!
//! A mean model `m(x; beta)` is fitted on the non-probability sample B, used
//! to impute the study variable for every unit of the probability sample A,
//! and the imputed values are weighted with A's design weights. Variance is
//! estimated by linearization (a design component for A plus a model
//! component for B) or by a bootstrap whose replicate weights and replicate
//! imputations can be released with sample A alone.

pub mod bootstrap;
pub mod data;
pub mod error;
pub mod estimators;
pub mod model;
pub mod rng;
pub mod simulation;
pub mod variance;

/// Version string embedded in reports and manifests.
pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub use bootstrap::{
    bootstrap_refit, bootstrap_variance, build_replicates, read_augmented_dataset, replicate_weights,
    write_augmented_dataset, AugmentedData, AugmentedManifest, ReplicateSet,
};
pub use data::{
    build_design_matrix, estimate_population_size, load_sample, write_sample, CovariateSpec, Design, DesignMatrix,
    DesignSpec, JointTable, SampleKind, Schema, SurveySample,
};
pub use error::{Error, ErrorCategory, Result};
pub use estimators::{
    fit_propensity, ht_mean, ipw_estimate, mass_imputation_estimate, naive_mean, EstimateReport, EstimatorKind,
    PropensityModel,
};
pub use model::{
    fit_model, mean_gradient, mean_value, predict_all, quasi_score, FittedModel, ModelFamily, SolverConfig,
};
pub use simulation::{run_monte_carlo, PopulationModel, SimConfig, SimReport};
pub use variance::{linearized_variance, LinearizationComponents, VarianceBlock, VarianceMethod, VarianceStrategy};
