//! Generative design of experiments.
//!
//! A constrained full-factorial design is embedded on a two-dimensional
//! latent plane by a β-VAE. Grids laid over that plane (square, polar,
//! double-square, cluster centroids) decode into reduced designs, which are
//! scored for constraint violations, confounding, coverage and balance.
//! Responses measured on any design can be interpolated over the plane to
//! locate an optimum, and a small regressor ranks factors by permutation
//! importance.
//!
//! Numeric routines are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`, which is what the command-line tool uses.

pub mod cluster;
pub mod constraint;
pub mod design;
mod error;
pub mod generator;
pub mod geometry;
mod matrix;
pub mod nn;
pub mod response;
mod scalar;
pub mod stats;
pub mod synthetic;
pub mod vae;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub use constraint::{parse_constraint, ConstraintExpr};
pub use design::{
    build_full_factorial, decode_vector, duplicate_and_split, encode_design, filter_by_constraints,
    ColumnMap, Design, FactorKind, FactorSpec, Level, NoiseConfig, Provenance, Transform,
};
pub use geometry::{GridSpec, LatentGrid};
pub use vae::{LatentSpace, TrainingConfig};

pub type Encoded = design::EncodedMatrix<f64>;
pub type Net = nn::DenseNet<f64>;
pub type Vae = vae::VaeModel<f64>;
pub type Embedding = vae::LatentEmbedding<f64>;
pub type Field = geometry::FieldMap<f64>;
pub type Clusters = cluster::Clustering<f64>;
pub type ResponseSurface = response::Surface<f64>;
