//! Latent grids, density diagnostics and the factor-level gradient metric.

mod field;
mod grid;

pub use field::{
    cell_center, density_map, extract_borders, gradient_map, lattice_points,
    low_gradient_segments, Aggregation, BorderCell, FactorField, FieldMap, FnField, Resolution,
};
pub use grid::{make_grid, polar_ring_radius, GridSpec, LatentGrid, SQUARE_ORIGINAL_HALF_WIDTH};
