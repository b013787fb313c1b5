//! Asynchronous RVI Q-learning for SMDPs.
//!
//! At iteration `n` the learner draws an update set `Y_n`, samples one
//! transition `(S', τ, R)` for every pair in it and applies
//!
//! ```text
//! Q(s,a) += α_ν ((R + max_a' Q(S',a') − Q(s,a)) / (T(s,a) ∨ η_n) − f(Q_n))
//! T(s,a) += β_ν (τ − T(s,a))
//! ```
//!
//! with `ν = ν(n,(s,a))` the number of earlier updates of that pair.

mod detect;
mod learner;
mod noise;
mod run;

pub use detect::{convergence_detector, greedy_policy, ConvergenceReport, Verdict};
pub use learner::{apply_update, Learner, LearnerConfig, LearnerState, StepOutcome, DIVERGENCE_BOUND};
pub use noise::{compute_noise_decomposition, NoiseDecomposition};
pub use run::{config_hash, run, Checkpoint, DivergenceRecord, RunConfig, RunTrace, DEFAULT_SNAPSHOT_EVERY};
