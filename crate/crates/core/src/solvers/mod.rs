//! Model-based ground truth.
//!
//! Everything here uses the exact expectations `r_sa`, `t_sa`, `p_ss'^a` of
//! a model: the shifted Bellman operator `T` and the mean fields `h`, `h′`,
//! `h∞` built from it, Schweitzer-style relative value iteration, a
//! brute-force gain oracle over deterministic policies, and a fixed-step
//! Runge-Kutta integrator for the mean-field ODEs.

mod ode;
mod operator;
mod oracle;
mod rvi;

pub use ode::{decomposition_gap, integrate_ode, integrate_with, rk4_step, MeanField, Trajectory, DEFAULT_DT};
pub use operator::{h_eval, h_infinity_eval, h_prime_eval, operator_t, ShiftedOperator};
pub use oracle::{gain_oracle, policy_gain, ClassGain, GainReport, PolicyGain, OPTIMALITY_TOLERANCE, ORACLE_BUDGET};
pub use rvi::{classical_rvi, classical_rvi_traced, default_rvi_alpha, rvi_step, AoeSolution, RviRun};
