//! Dataset-aware hyperparameter importance analysis and guided optimization.
//!
//! Given a knowledge base of evaluated hyperparameter configurations, the
//! pipeline retrieves datasets similar to a new target in meta-feature space,
//! fits a regression-forest surrogate over the pooled observations, attributes
//! predicted performance to individual hyperparameters via Shapley values
//! (plus pairwise interaction indices), and turns the attributions into
//! ranked hyperparameters with recommended tuning ranges. A Gaussian-process
//! optimizer can then run either over the full space or restricted to the
//! recommended subspace.
//!
//! Numeric kernels (forest, GP, Shapley engine, smoothing, designs) are
//! generic over the scalar type through [`scalar::Real`]; the pipeline layer
//! uses the `f64`-backed aliases exported at the crate root.

pub mod attribution;
pub mod benchgen;
pub mod dataset;
pub mod design;
pub mod error;
pub mod forest;
pub mod gp;
pub mod insights;
pub mod jsonfmt;
pub mod kb;
pub mod metafeatures;
pub mod optimizer;
pub mod pipeline;
pub mod retrieval;
pub mod scalar;
pub mod seeding;
pub mod space;
pub mod stats;
pub mod surrogate;

pub use error::{Error, Result, Stage};

/// Scalar type used by the pipeline layer.
pub type Scalar = f64;

/// Regression forest over pipeline scalars.
pub type Forest = forest::RegressionForest<Scalar>;

/// Gaussian process over pipeline scalars.
pub type Gp = gp::GaussianProcess<Scalar>;
