//! Beamspace channel estimation for lens-array mmWave massive MIMO.
//!
//! The crate covers the whole pipeline: Saleh-Valenzuela channel simulation and
//! the lens-array beamspace transform ([`channel`]), pseudo-random beam selection
//! and pilot measurements ([`measurement`]), soft-threshold and Gaussian-mixture
//! shrinkage ([`shrinkage`]), the AMP / LAMP / GM-LAMP / OMP estimators
//! ([`estimators`]), layer-by-layer training of the unfolded networks
//! ([`training`]) and NMSE sweeps ([`eval`]).

pub mod channel;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod measurement;
pub mod oracle;
pub mod rng;
pub mod shrinkage;
pub mod training;

pub use error::{Error, Result};
pub use linalg::C64;
