//! Markov chains induced by deterministic stationary policies.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::communication::{closed_components, strongly_connected_components};
use super::{DeterministicPolicy, SmdpModel};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecurrentClass {
    pub states: Vec<usize>,
    /// Stationary probabilities aligned with `states`.
    pub stationary: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InducedChain {
    /// Row-major `|S| x |S|` transition matrix.
    pub matrix: Vec<f64>,
    pub num_states: usize,
    pub classes: Vec<RecurrentClass>,
    pub transient: Vec<usize>,
}

impl InducedChain {
    pub fn probability(&self, s: usize, t: usize) -> f64 {
        self.matrix[s * self.num_states + t]
    }

    /// `‖μP − μ‖∞` for the stationary law of class `k`, extended by zero.
    pub fn stationarity_error(&self, k: usize) -> f64 {
        let n = self.num_states;
        let mut mu = vec![0.0; n];
        for (&s, &m) in self.classes[k].states.iter().zip(&self.classes[k].stationary) {
            mu[s] = m;
        }
        (0..n).map(|t| ((0..n).map(|s| mu[s] * self.probability(s, t)).sum::<f64>() - mu[t]).abs()).fold(0.0, f64::max)
    }
}

pub fn induced_chain(model: &SmdpModel, policy: &DeterministicPolicy) -> Result<InducedChain> {
    let n = model.num_states();
    if policy.actions().len() != n {
        return Err(Error::Domain(format!("policy covers {} states, model has {n}", policy.actions().len())));
    }
    let mut matrix = vec![0.0; n * n];
    let mut adjacency = vec![Vec::new(); n];
    for s in 0..n {
        let pair = model.check_pair(s, policy.action(s))?;
        for &(t, p) in model.successors(pair) {
            matrix[s * n + t] += p;
            adjacency[s].push(t);
        }
    }
    let components = strongly_connected_components(&adjacency);
    let closed = closed_components(&adjacency, &components);
    let mut recurrent = vec![false; n];
    let mut classes = Vec::with_capacity(closed.len());
    for states in closed {
        let stationary = stationary_distribution(&matrix, n, &states)?;
        for &s in &states {
            recurrent[s] = true;
        }
        classes.push(RecurrentClass { states, stationary });
    }
    let transient = (0..n).filter(|&s| !recurrent[s]).collect();
    Ok(InducedChain { matrix, num_states: n, classes, transient })
}

/// Solves `μ P_C = μ`, `Σ μ = 1` on a closed class by replacing the last
/// balance equation with the normalization.
fn stationary_distribution(matrix: &[f64], n: usize, states: &[usize]) -> Result<Vec<f64>> {
    let m = states.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (j, &sj) in states.iter().enumerate() {
        for (i, &si) in states.iter().enumerate() {
            // row j of (P_C - I)^T
            a[(j, i)] = matrix[si * n + sj] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..m {
        a[(m - 1, i)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(m);
    b[m - 1] = 1.0;
    let solution = a.clone().lu().solve(&b);
    let condition = || {
        let sv = a.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    };
    match solution {
        Some(mu) if mu.iter().all(|v| v.is_finite()) => Ok(mu.iter().map(|&v| v.max(0.0)).collect()),
        _ => Err(Error::Numerical {
            message: format!("stationary distribution solve failed on class {states:?}"),
            condition: condition(),
        }),
    }
}
