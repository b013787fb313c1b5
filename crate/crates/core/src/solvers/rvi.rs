use serde::Serialize;

use super::operator::ShiftedOperator;
use crate::error::{Error, Result};
use crate::rate::RateFunction;
use crate::smdp::{state_maxima, sup_norm, QTable, SmdpModel};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AoeSolution {
    pub q: QTable,
    pub rstar: f64,
    /// `‖h′(q)‖∞` at `rstar = f(q)` and the iteration's `ᾱ`.
    pub residual: f64,
    pub alpha_bar: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RviRun {
    pub solution: AoeSolution,
    /// Residual before each iteration, ending with the final one.
    pub residuals: Vec<f64>,
}

/// Strict interior choice `0.9 · t_min`.
pub fn default_rvi_alpha(model: &SmdpModel) -> f64 {
    0.9 * model.t_min()
}

/// One synchronous sweep
/// `Q + ᾱ ((r + Σ p max Q − Q) / t − f(Q))`.
pub fn rvi_step(model: &SmdpModel, f: &RateFunction, q: &[f64], alpha_bar: f64) -> Result<Vec<f64>> {
    if q.len() != model.num_pairs() {
        return Err(Error::Domain(format!("q has {} entries, model has {} pairs", q.len(), model.num_pairs())));
    }
    let na = model.num_actions();
    let f_value = f.eval(q)?;
    let maxima = state_maxima(q, na);
    Ok((0..q.len())
        .map(|i| {
            let next: f64 = model.successors(i).iter().map(|&(s, p)| p * maxima[s]).sum();
            q[i] + alpha_bar * ((model.expected_reward(i) + next - q[i]) / model.expected_holding(i) - f_value)
        })
        .collect())
}

pub fn classical_rvi(
    model: &SmdpModel,
    f: &RateFunction,
    q0: &QTable,
    alpha_bar: f64,
    max_iters: usize,
    tol: f64,
) -> Result<AoeSolution> {
    classical_rvi_traced(model, f, q0, alpha_bar, max_iters, tol).map(|run| run.solution)
}

pub fn classical_rvi_traced(
    model: &SmdpModel,
    f: &RateFunction,
    q0: &QTable,
    alpha_bar: f64,
    max_iters: usize,
    tol: f64,
) -> Result<RviRun> {
    let t_min = model.t_min();
    if !(alpha_bar > 0.0 && alpha_bar < t_min) {
        return Err(Error::Parameter(format!("RVI needs alpha_bar in (0, {t_min}), got {alpha_bar}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    if q0.num_actions() != model.num_actions() || q0.len() != model.num_pairs() {
        return Err(Error::Domain("initial table does not match the model".into()));
    }
    if f.dim() != model.num_pairs() {
        return Err(Error::Domain(format!("f has dimension {}, model has {} pairs", f.dim(), model.num_pairs())));
    }
    let op = ShiftedOperator::new(model, alpha_bar)?;
    let mut q = q0.to_vec();
    let mut residuals = Vec::new();
    for iteration in 0..=max_iters {
        let residual = sup_norm(&op.h(f, &q)?);
        residuals.push(residual);
        if !residual.is_finite() {
            return Err(Error::Divergence { n: iteration as u64, detail: "non-finite RVI residual".into() });
        }
        if residual <= tol {
            let rstar = f.eval(&q)?;
            let residual = op.aoe_residual(&q, rstar)?;
            let q = QTable::from_vec(model.num_actions(), q)?;
            return Ok(RviRun {
                solution: AoeSolution { q, rstar, residual, alpha_bar, iterations: iteration },
                residuals,
            });
        }
        if iteration == max_iters {
            return Err(Error::IterationLimit { iterations: max_iters, residual });
        }
        q = rvi_step(model, f, &q, alpha_bar)?;
    }
    unreachable!("loop returns on its last iteration")
}
