use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::smdp::{induced_chain, DeterministicPolicy, SmdpModel};

/// Maximum number of deterministic policies the oracle will enumerate.
pub const ORACLE_BUDGET: f64 = 1e6;
/// A policy counts as optimal when every recurrent class it induces
/// reaches `r* − OPTIMALITY_TOLERANCE`.
pub const OPTIMALITY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassGain {
    pub states: Vec<usize>,
    /// Renewal-reward ratio `Σ μ r / Σ μ t` over the class.
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyGain {
    pub policy: DeterministicPolicy,
    pub classes: Vec<ClassGain>,
}

impl PolicyGain {
    pub fn min_gain(&self) -> f64 {
        self.classes.iter().map(|c| c.gain).fold(f64::INFINITY, f64::min)
    }

    pub fn max_gain(&self) -> f64 {
        self.classes.iter().map(|c| c.gain).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GainReport {
    pub rstar: f64,
    pub policies: Vec<PolicyGain>,
    /// Indices into `policies` of the optimal policies.
    pub optimal: Vec<usize>,
}

impl GainReport {
    pub fn optimal_policies(&self) -> impl Iterator<Item = &DeterministicPolicy> {
        self.optimal.iter().map(|&k| &self.policies[k].policy)
    }

    pub fn is_optimal(&self, policy: &DeterministicPolicy) -> bool {
        self.optimal_policies().any(|p| p == policy)
    }
}

/// Gain of every recurrent class of the chain induced by `policy`.
pub fn policy_gain(model: &SmdpModel, policy: &DeterministicPolicy) -> Result<Vec<ClassGain>> {
    let chain = induced_chain(model, policy)?;
    Ok(chain
        .classes
        .into_iter()
        .map(|class| {
            let (mut reward, mut time) = (0.0, 0.0);
            for (&s, &mu) in class.states.iter().zip(&class.stationary) {
                let pair = model.pair_index(s, policy.action(s));
                reward += mu * model.expected_reward(pair);
                time += mu * model.expected_holding(pair);
            }
            ClassGain { states: class.states, gain: reward / time }
        })
        .collect())
}

/// Enumerates all `|A|^|S|` deterministic stationary policies.
pub fn gain_oracle(model: &SmdpModel) -> Result<GainReport> {
    let ns = model.num_states();
    let na = model.num_actions();
    let required = (na as f64).powi(ns as i32);
    if required > ORACLE_BUDGET {
        return Err(Error::Budget { required, budget: ORACLE_BUDGET });
    }
    let count = required as usize;
    let policies: Vec<PolicyGain> = (0..count)
        .into_par_iter()
        .map(|code| {
            let mut rest = code;
            let actions = (0..ns)
                .map(|_| {
                    let a = rest % na;
                    rest /= na;
                    a
                })
                .collect();
            let policy = DeterministicPolicy::from_actions(actions);
            let classes = policy_gain(model, &policy)?;
            Ok(PolicyGain { policy, classes })
        })
        .collect::<Result<_>>()?;
    let rstar = policies.iter().map(PolicyGain::max_gain).fold(f64::NEG_INFINITY, f64::max);
    let optimal = policies
        .iter()
        .enumerate()
        .filter(|(_, p)| p.min_gain() >= rstar - OPTIMALITY_TOLERANCE)
        .map(|(k, _)| k)
        .collect();
    Ok(GainReport { rstar, policies, optimal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smdp::TransitionLaw;

    #[test]
    fn best_action_of_single_state() {
        let d = TransitionLaw::deterministic;
        let model = SmdpModel::new(1, 2, vec![d(0, 1.0, 3.0), d(0, 2.0, 4.0)]).unwrap();
        let report = gain_oracle(&model).unwrap();
        assert_eq!(report.rstar, 3.0);
        assert_eq!(report.optimal, vec![0]);
    }

    #[test]
    fn two_cycle_averages_rewards() {
        let d = TransitionLaw::deterministic;
        let model = SmdpModel::new(2, 1, vec![d(1, 1.0, 4.0), d(0, 1.0, 0.0)]).unwrap();
        assert!((gain_oracle(&model).unwrap().rstar - 2.0).abs() < 1e-15);
    }

    #[test]
    fn holding_times_weight_the_ratio() {
        let d = TransitionLaw::deterministic;
        // cycle 0 -> 1 -> 0 with rewards 3, 1 and holding times 1, 3
        let model = SmdpModel::new(2, 1, vec![d(1, 1.0, 3.0), d(0, 3.0, 1.0)]).unwrap();
        assert!((gain_oracle(&model).unwrap().rstar - 1.0).abs() < 1e-15);
    }

    #[test]
    fn budget_is_enforced() {
        let laws = (0..20 * 2).map(|k| TransitionLaw::deterministic(k / 2, 1.0, 0.0)).collect();
        let model = SmdpModel::new(20, 2, laws).unwrap();
        assert!(matches!(gain_oracle(&model), Err(Error::Budget { .. })));
    }
}
