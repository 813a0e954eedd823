//! Multivariate count regression with Gaussian-copula dependence.
//!
//! Each species' marginal distribution is a discrete transformation model
//! `P(Y_j ≤ y | x) = Φ(α_j(⌊y⌋) − η_j(x))` with a monotone Bernstein polynomial
//! `α_j`, and the species are coupled through a latent normal vector whose
//! precision is parameterized by a unit lower-triangular matrix `Λ(x)`.

pub mod data;
pub mod dependence;
pub mod design;
pub mod error;
pub mod estimation;
pub mod exact;
pub mod likelihood;
pub mod model;
pub mod normal;
pub mod optimize;
pub mod simulate;

pub use nalgebra;
pub use data::{ingest_csv, IngestConfig, ObservationTable};
pub use design::{BernsteinBasis, HarmonicDesign};
pub use error::{Error, Result};
pub use likelihood::LikelihoodKind;
pub use model::{Covariates, JointModel, LambdaMode, LambdaParams, LambdaSpec, Link, MarginalParams, ModelStructure};
