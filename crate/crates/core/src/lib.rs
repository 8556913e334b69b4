//! Quantum stochastic walk (QSW) portfolio construction.
//!
//! Asset statistics over a training window are encoded as a dual-channel
//! graph (a Google matrix of Sharpe/covariance preferences and a Hamiltonian),
//! a density matrix is evolved under the discretized open-system dynamics to
//! its stationary state, and the stationary populations become portfolio
//! weights. The crate also carries the classical references used to judge
//! those weights (max-Sharpe mean-variance, an equal-weight index proxy, the
//! classical stationary law), a quarterly-rebalanced backtester with the usual
//! performance and concentration metrics, and parallel experiment sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod bench;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod market_data;
pub mod metrics;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
