//! Discretized fields on a truncated periodic grid, the discrete Fourier
//! transform convention, and the weighted Sobolev–Kato and `H_{z,zeta}` norms.

mod grid;
pub mod io;
mod norms;
mod transform;

pub use grid::{Field, Grid, Point};
pub use norms::{
    algebra_constant_probe, boundary_mass, h_zz_components, h_zz_norm, h_zz_norm_sq_hilbert,
    l2_norm, sobolev_kato_norm, AlgebraProbe, HSpace, BOUNDARY_MASS_LIMIT,
};
pub use transform::{forward_transform, inverse_transform, Spectrum};
