//! Replicated responses, interpolated response surfaces, optima and
//! permutation importance.

mod delaunay;
mod importance;
mod lcl;
mod surface;

pub use delaunay::{triangulate, Triangulation};
pub use importance::{
    importance, importance_generic, importance_network, FactorImportance, ImportanceConfig,
    ImportanceReport, SMALL_DESIGN,
};
pub use lcl::{compute_lcl, read_responses_csv, ResponseRecord, DEFAULT_CONFIDENCE};
pub use surface::{
    find_optimum, interpolate, interpolate_points, interpolate_strict, CellSource, Goal, Optimum,
    Surface, SurfaceNode, DEFAULT_SURFACE_RESOLUTION,
};
