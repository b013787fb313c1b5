use serde::Serialize;

use crate::error::{Error, Result};
use crate::rate::RateFunction;
use crate::smdp::{state_maxima, SmdpModel, Transition};
use crate::solvers::ShiftedOperator;

/// Split of one iteration's increment into mean field and noise, all at
/// `ᾱ = t_min`. Vectors have one entry per pair and vanish off `Y_n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseDecomposition {
    pub alpha_bar: f64,
    /// Centered reward and next-state noise
    /// `ᾱ ((R − r) / (T ∨ η) + (V(S') − Σ p V) / t)`.
    pub m: Vec<f64>,
    /// Bias from using `T ∨ η` in place of `t`:
    /// `ᾱ ((r + V(S') − Q) / (T ∨ η) − (r + V(S') − Q) / t)`.
    pub eps: Vec<f64>,
    /// `h(Q_n)` on `Y_n`.
    pub h: Vec<f64>,
    /// `ᾱ ((R + V(S') − Q) / (T ∨ η) − f(Q_n))`, the realized increment
    /// before the stepsize, scaled by `ᾱ`.
    pub increment: Vec<f64>,
}

impl NoiseDecomposition {
    /// `max_i |increment − (h + M + ε)|`.
    pub fn reconstruction_error(&self) -> f64 {
        (0..self.m.len()).map(|i| (self.increment[i] - (self.h[i] + self.m[i] + self.eps[i])).abs()).fold(0.0, f64::max)
    }
}

/// Evaluates the decomposition at the pre-update tables `q`, `t`.
pub fn compute_noise_decomposition(
    model: &SmdpModel,
    f: &RateFunction,
    q: &[f64],
    t: &[f64],
    eta: f64,
    update_set: &[usize],
    samples: &[Transition],
) -> Result<NoiseDecomposition> {
    let d = model.num_pairs();
    if q.len() != d || t.len() != d || update_set.len() != samples.len() {
        return Err(Error::Domain("noise decomposition inputs have inconsistent sizes".into()));
    }
    let op = ShiftedOperator::at_t_min(model)?;
    let alpha_bar = op.alpha_bar();
    let f_value = f.eval(q)?;
    let h_full = op.h(f, q)?;
    let values = state_maxima(q, model.num_actions());
    let mut out =
        NoiseDecomposition { alpha_bar, m: vec![0.0; d], eps: vec![0.0; d], h: vec![0.0; d], increment: vec![0.0; d] };
    for (&i, sample) in update_set.iter().zip(samples) {
        let r = model.expected_reward(i);
        let t_true = model.expected_holding(i);
        let denom = t[i].max(eta);
        let next = values[sample.next];
        let mean_next: f64 = model.successors(i).iter().map(|&(s, p)| p * values[s]).sum();
        out.m[i] = alpha_bar * ((sample.reward - r) / denom + (next - mean_next) / t_true);
        let bellman = r + next - q[i];
        out.eps[i] = alpha_bar * (bellman / denom - bellman / t_true);
        out.h[i] = h_full[i];
        out.increment[i] = alpha_bar * ((sample.reward + next - q[i]) / denom - f_value);
    }
    Ok(out)
}
