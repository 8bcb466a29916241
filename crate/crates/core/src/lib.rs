//! Numerical lab for weighted-L2 contraction of viscous shocks of
//! `u_t + (u^p)_x = u_xx`.

pub mod certifier;
pub mod error;
pub mod exec;
pub mod functionals;
pub mod grid;
pub mod params;
pub mod poincare;
pub mod profile;
pub mod quadrature;
pub mod solver;
pub mod weight;

pub use certifier::{certify, certify_with, sweep, CertificateReport, SweepOutcome};
pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::{Field, Grid};
pub use params::{flux, shock_speed, ShockParams};
pub use functionals::{DiagnosticsRow, CSV_HEADER};
pub use profile::{build_default, build_profile, ShockProfile};
pub use solver::{run, Perturbation, Solver, SolverConfig, Stabilizer, Trajectory};
pub use weight::WeightFunctions;

/// Version string written into every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
