//! Smooth nonparametric copula estimators built on rank statistics.
//!
//! Estimators mix the empirical copula over a smoothing law centred at the
//! evaluation point: binomial, beta-binomial or beta margins tied together by an
//! independence, empirical-beta or parametric survival copula. The crate also
//! provides parametric copula models for simulation, a Monte Carlo benchmark
//! harness and sequential empirical copula processes.

pub mod benchmark;
pub mod error;
pub mod estimators;
pub mod margins;
pub mod models;
pub mod numerics;
pub mod qmc;
pub mod ranks;
pub mod rng;
pub mod sequential;

pub use error::{Error, Result};
