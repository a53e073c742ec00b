//! Solver suite and Monte Carlo simulator for a continuous-time insider
//! trading market with price-responsive (momentum and contrarian) traders.
//!
//! The market maker filters the fundamental from aggregate order flow with a
//! Kalman-Bucy filter whose covariance solves a matrix Riccati ODE; the
//! insider's optimal intensity solves a forward-backward system. The crate
//! computes that equilibrium, quantifies weak-feedback comparative statics,
//! and probes the three strong-feedback breakdown mechanisms (Riccati
//! blowup, loss of contraction of the fixed-point map, filter instability).

pub mod equilibrium;
pub mod error;
pub mod filter;
pub mod linalg;
pub mod model;
pub mod output;
pub mod perturbation;
pub mod riccati;
pub mod rng;
pub mod simulator;
pub mod stability;

pub use error::{Error, Result};
