//! PLS-SVD under entry-wise missingness in both views.
//!
//! The crate covers the masked spiked two-view model ([`synth`]), the
//! closed-form phase-transition predictions and their variational oracle
//! ([`theory`]), the missing-as-zero PLS-SVD estimator with imputation
//! baselines ([`estimators`]), a deterministic Monte Carlo runner
//! ([`harness`]) and the file/config surface used by the CLI ([`io`]).

pub mod checks;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod synth;
pub mod theory;

pub use error::{Error, Result};
