//! Parametric squeezing amplification of a two-mode Bose-Einstein condensate
//! in a double well: exact two-mode dynamics, squeezing diagnostics, resonant
//! drive protocols, gradient-based optimal control of the trapping ramp, and a
//! two-orbital grid model.
//!
//! All numerical types are generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the tolerances in the
//! test suite assume.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod error;
pub mod grape;
pub mod io;
pub mod linalg;
pub mod nelder_mead;
pub mod orbital;
pub mod scalar;
pub mod schedules;
pub mod two_mode;

pub use error::{Error, Result};
pub use scalar::Real;
pub use two_mode::Operator;

pub type ManyBodyState64 = two_mode::ManyBodyState<f64>;
pub type TwoModeHamiltonian64 = two_mode::TwoModeHamiltonian<f64>;
pub type SpinOperator64 = two_mode::SpinOperator<f64>;
pub type SqueezingReport64 = bloch::SqueezingReport<f64>;
pub type HusimiGrid64 = bloch::HusimiGrid<f64>;
pub type LambdaMap64 = schedules::LambdaMap<f64>;
pub type ControlRamp64 = schedules::ControlRamp<f64>;
pub type OctProblem64 = grape::OctProblem<f64>;
pub type OctTrace64 = grape::OctTrace<f64>;
pub type Grid1D64 = orbital::Grid1D<f64>;
pub type OrbitalPair64 = orbital::OrbitalPair<f64>;
pub type OrbitalModel64 = orbital::OrbitalModel<f64>;
