//! Average-reward semi-Markov decision processes on a desk.
//!
//! The crate has two halves. The model-based half ([`smdp`], [`solvers`])
//! represents finite SMDPs, checks their communication structure and solves
//! the average-reward optimality equation exactly, by relative value
//! iteration and by brute-force policy enumeration. The learning half
//! ([`rate`], [`schedules`], [`learning`]) implements asynchronous RVI
//! Q-learning with holding-time estimation and a general family of
//! reward-rate estimators `f`, together with diagnostics that compare the
//! stochastic iterates with the model-based ground truth.
//!
//! [`harness`] ties both halves into reproducible experiments: a model zoo,
//! JSON configuration, CSV traces and the acceptance battery.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod learning;
pub mod rate;
pub mod schedules;
pub mod smdp;
pub mod solvers;

pub use error::{Error, Result};
pub use rate::RateFunction;
pub use smdp::{DeterministicPolicy, QTable, SmdpModel};
