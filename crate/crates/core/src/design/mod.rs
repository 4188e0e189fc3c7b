//! Factors, full-factorial enumeration, constraint filtering and the numeric
//! encoding consumed by the autoencoder.

mod encoding;
mod factor;
mod split;
mod table;

pub use encoding::{
    decode_vector, encode_design, encode_with, ColumnBlock, ColumnMap, EncodedMatrix,
    EncodingRule,
};
pub use factor::{FactorKind, FactorSpec, Level, Transform};
pub use split::{duplicate_and_split, NoiseConfig};
pub(crate) use split::duplicate_rows;
pub use table::{
    build_full_factorial, build_full_factorial_capped, filter_by_constraints, Design,
    Provenance, DEFAULT_TRIAL_CAP,
};
