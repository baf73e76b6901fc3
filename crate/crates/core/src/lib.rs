//! Numerical laboratory for the Cauchy problem of semilinear stochastic
//! Schrödinger equations on asymptotically flat metrics.
//!
//! The crate builds the pieces of the mild-solution construction and turns
//! the quantitative estimates behind it into executable checks:
//!
//! * [`symbol`]: symbols in the classes `S^{m,mu}`, the generator pieces built
//!   from a metric, symbol-estimate and ellipticity certification.
//! * [`fields`]: periodic grids, the Fourier convention, Sobolev–Kato and
//!   `H_{z,zeta}` norms, binary field I/O.
//! * [`quantization`]: Kohn–Nirenberg application of symbols and the full
//!   generator bundle.
//! * [`propagator`]: the linear evolution `S(t)` and its growth bound.
//! * [`noise`]: spectral measures, correlation measures, Cameron–Martin bases.
//! * [`stochastic`]: cylindrical Wiener paths, stochastic integrals, the Itô
//!   isometry harness and the Hilbert–Schmidt estimate.
//! * [`solver`]: Nemytskii nonlinearities, contraction horizon, Picard and
//!   Euler–Maruyama solvers.
//! * [`run`]: configuration, batch orchestration and run manifests.

pub mod conventions;
pub mod error;
pub mod fields;
pub mod noise;
pub mod propagator;
pub mod quantization;
pub mod rng;
pub mod run;
pub mod solver;
pub mod stochastic;
pub mod symbol;
pub mod verify;

mod par;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use par::with_workers;
