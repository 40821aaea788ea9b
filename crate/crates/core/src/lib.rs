//! Finite conditional Markov chains (CMCs) along a realized factor scenario.
//!
//! A CMC is specified by a product state space `S = S_1 × … × S_N`, an
//! intensity (generator) path that is piecewise constant on the scenario
//! grid, and an initial law. Everything "conditional on the reference
//! information up to time t" is deterministic once the scenario is fixed,
//! so the crate works with plain matrices:
//!
//! * [`kolmogorov`] solves the conditional forward/backward equations
//!   into transition fields `P(s, t)` and state distributions.
//! * [`consistency`] decides strong (ASM/SM) and weak Markovian
//!   consistency of single components and extracts marginal intensities.
//! * [`copulae`] builds strong and weak CMC copulae with prescribed
//!   marginal intensities and validates pre-copula conditions.
//! * [`montecarlo`] simulates sample paths exactly and provides empirical
//!   estimators (transition laws, compensator residuals, stratified Markov
//!   tests).
//! * [`premium`] prices pool-aware unemployment insurance.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![deny(missing_debug_implementations, unsafe_code)]

extern crate alloc;

pub mod consistency;
pub mod copulae;
pub mod error;
pub mod generator;
pub mod kolmogorov;
pub mod matrix;
pub mod model;
pub mod montecarlo;
pub mod premium;
pub mod space;

pub use error::{Error, Result};
pub use generator::{validate_generator, GeneratorMatrix};
pub use matrix::{kron, kron_sum, Matrix};
pub use model::{CmcModel, FactorScenario, GeneratorPath, InitialLaw, RatePath};
pub use space::ProductStateSpace;

/// Absolute tolerance for structural checks (row sums, law sums).
pub const STRUCTURAL_TOL: f64 = 1e-12;

/// Tolerance for ODE / transition-field checks.
pub const TRANSITION_TOL: f64 = 1e-8;

/// Probability below which a state is considered off-support.
pub const SUPPORT_EPS: f64 = 1e-12;
