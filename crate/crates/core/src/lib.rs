//! Analytic-weighted MHD on a periodic strip: Littlewood-Paley machinery,
//! the hydrostatic limit solver, the ε-scaled solver, energy diagnostics
//! and the ε-convergence harness.
//!
//! Fields are stored as horizontal Fourier coefficients per wall-normal
//! level (`SpectralField`). Solvers evolve the weighted variables
//! `e^{r(t)|D_x|} u` directly.

pub mod analyticity;
pub mod besov;
pub mod config;
pub mod convergence;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod imex;
pub mod io;
pub mod limit;
pub mod lp;
pub mod monitor;
pub mod nonlinear;
pub mod profiles;
pub mod record;
pub mod runner;
pub mod scaled;
pub mod state;
pub mod vertical;

pub use error::{Error, Result};
pub use field::{Levels, SpectralField};
pub use grid::GridSpec;
pub use num_complex::Complex64;
