//! Grids, transforms, differentiation, quadrature and Sobolev norms on the
//! periodic cross-section and the slab below it.
pub mod cheb;
pub mod dump;
pub mod field;
pub mod grid;
pub mod ops;

pub use field::{SurfaceField, SurfaceSpectrum, SurfaceVector, TensorField, VectorField, VolumeField, VolumeSpectrum};
pub use grid::{make_grid, Grid};
pub use ops::{
    diff, dealias_surface, dealias_volume, integrate_surface, integrate_volume, sobolev_norm_surface,
    sobolev_norm_volume, trace_surface, Diff,
};
