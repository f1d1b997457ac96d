//! Numerical laboratory for metastable transition times of overdamped
//! diffusions `dx = -∇V(x) dt + sqrt(2ε) dW`.
//!
//! Mean transition times are predicted with the Arrhenius / Eyring–Kramers
//! formulas (including the pitchfork-saddle and Allen–Cahn variants) and
//! cross-checked by independent machinery: exact one-dimensional quadrature,
//! grid committor and capacity solvers, generator spectra, Monte Carlo
//! simulation and action minimization.

pub mod action;
pub mod cycling;
pub mod error;
pub mod exact1d;
pub mod fieldsolver;
pub mod io;
pub mod landscape;
pub mod linalg;
pub mod potential;
pub mod quadrature;
pub mod rate;
pub mod sde;
pub mod spde;
pub mod special;

pub use error::{Error, Result};
pub use landscape::{CriticalPoint, Hierarchy, TransitionSpec};
pub use potential::{make_builtin, Potential, PotentialParams, SharedPotential};
pub use rate::{KramersPrediction, Regime};
pub use sde::{HittingStats, SimConfig};
