//! Data-driven optimal tracking control with input constraints, learned by Q-function value
//! iteration where each policy evaluation is a linear program over sampled Bellman
//! inequalities.
//!
//! The pipeline:
//!
//! * [`plant`]: black-box system, augmented tracking state `z = [e; r]`, saturation.
//! * [`qfunc`]: quadratic-in-features Q-functions and their greedy policies.
//! * [`sampling`]: replay buffer and per-iteration multi-step rollouts.
//! * [`lp`]: relevance-weight moments, constraint assembly and the solver contract.
//! * [`algorithms`]: MSQ-VI-LP, Q-VI-LP, Q-PI-LP and convergence diagnostics.
//! * [`harness`]: experiment configs and plot-ready CSV/JSON artifacts.

pub mod algorithms;
pub mod benchmark;
pub mod error;
pub mod harness;
pub mod lp;
pub mod output;
pub mod plant;
pub mod qfunc;
pub mod sampling;

pub use error::{Error, Result};
