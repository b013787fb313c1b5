//! Built-in models with certified properties.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::smdp::{classify_communication, Branch, HoldingTimeDist, RewardDist, SmdpModel, TransitionLaw};
use crate::solvers::gain_oracle;

#[derive(Clone, Debug, Serialize)]
pub struct ModelZooEntry {
    pub name: &'static str,
    pub description: &'static str,
    #[serde(skip)]
    pub model: SmdpModel,
    pub weakly_communicating: bool,
    /// Optimal reward rate; `None` when it is not constant over states.
    pub rstar: Option<f64>,
    pub t_min: f64,
}

impl ModelZooEntry {
    /// Recomputes the certified properties and compares them with the
    /// recorded ones.
    pub fn certify(&self) -> Result<()> {
        let wc = classify_communication(&self.model).is_weakly_communicating();
        let mut problems = Vec::new();
        if wc != self.weakly_communicating {
            problems
                .push(format!("{}: weakly communicating is {wc}, recorded {}", self.name, self.weakly_communicating));
        }
        if (self.model.t_min() - self.t_min).abs() > 1e-12 {
            problems.push(format!("{}: t_min is {}, recorded {}", self.name, self.model.t_min(), self.t_min));
        }
        if let Some(expected) = self.rstar {
            let rstar = gain_oracle(&self.model)?.rstar;
            if (rstar - expected).abs() > 1e-12 {
                problems.push(format!("{}: r* is {rstar}, recorded {expected}", self.name));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

fn det(next: usize, tau: f64, reward: f64) -> TransitionLaw {
    TransitionLaw::deterministic(next, tau, reward)
}

fn exp_branch(p: f64, next: usize, mean: f64, reward: RewardDist) -> Branch {
    Branch::new(p, next, HoldingTimeDist::Exponential { rate: 1.0 / mean }, reward)
}

/// One state, two actions with gains 3 and 2.
pub fn unit1() -> SmdpModel {
    SmdpModel::new(1, 2, vec![det(0, 1.0, 3.0), det(0, 2.0, 4.0)]).expect("valid")
}

/// Deterministic two-state cycle with rewards 4 and 0.
pub fn cycle2() -> SmdpModel {
    SmdpModel::new(2, 1, vec![det(1, 1.0, 4.0), det(0, 1.0, 0.0)]).expect("valid")
}

fn three_state(stay: f64, switch: f64) -> SmdpModel {
    SmdpModel::new(
        3,
        2,
        vec![
            det(0, 1.0, stay),
            det(1, 1.0, switch),
            det(1, 1.0, stay),
            det(0, 1.0, switch),
            det(0, 1.0, 0.0),
            det(0, 1.0, 0.0),
        ],
    )
    .expect("valid")
}

/// States 0 and 1 choose between staying and switching (unit reward and
/// holding time); state 2 is transient and enters state 0.
pub fn wc3() -> SmdpModel {
    three_state(1.0, 1.0)
}

pub fn wc3_zero() -> SmdpModel {
    three_state(0.0, 0.0)
}

/// As `wc3` but switching earns nothing, so the two self-loops are
/// separate optimal classes and the relative values of states 0 and 1 may
/// differ by up to one.
pub fn wc3_multi() -> SmdpModel {
    three_state(1.0, 0.0)
}

/// Two states, two actions, exponential holding times with
/// `t_min = 0.5` and random rewards.
pub fn smdp_exp() -> SmdpModel {
    let gauss = |mean: f64, stddev: f64| RewardDist::Gaussian { mean, stddev };
    SmdpModel::new(
        2,
        2,
        vec![
            TransitionLaw::new(vec![
                exp_branch(0.7, 0, 0.5, gauss(1.0, 1.0)),
                exp_branch(0.3, 1, 0.5, gauss(1.0, 1.0)),
            ]),
            TransitionLaw::new(vec![exp_branch(
                1.0,
                1,
                1.0,
                RewardDist::DiscreteSupport { support: vec![(0.5, 0.0), (0.5, 4.0)] },
            )]),
            TransitionLaw::new(vec![
                exp_branch(0.5, 0, 2.0, gauss(3.0, 2.0)),
                exp_branch(0.5, 1, 2.0, gauss(3.0, 2.0)),
            ]),
            TransitionLaw::new(vec![exp_branch(1.0, 0, 0.8, RewardDist::Deterministic { value: 0.5 })]),
        ],
    )
    .expect("valid")
}

/// Two absorbing states: not weakly communicating.
pub fn two_loops() -> SmdpModel {
    SmdpModel::new(2, 2, vec![det(0, 1.0, 1.0), det(0, 1.0, 0.0), det(1, 1.0, 2.0), det(1, 1.0, 0.0)]).expect("valid")
}

pub fn model_zoo() -> Vec<ModelZooEntry> {
    vec![
        ModelZooEntry {
            name: "unit1",
            description: "one state, two actions with gains 3 and 2",
            model: unit1(),
            weakly_communicating: true,
            rstar: Some(3.0),
            t_min: 1.0,
        },
        ModelZooEntry {
            name: "cycle2",
            description: "two-state deterministic cycle, rewards (4, 0)",
            model: cycle2(),
            weakly_communicating: true,
            rstar: Some(2.0),
            t_min: 1.0,
        },
        ModelZooEntry {
            name: "wc3",
            description: "stay/switch between states 0 and 1, transient state 2",
            model: wc3(),
            weakly_communicating: true,
            rstar: Some(1.0),
            t_min: 1.0,
        },
        ModelZooEntry {
            name: "wc3-zero",
            description: "wc3 with all rewards zero",
            model: wc3_zero(),
            weakly_communicating: true,
            rstar: Some(0.0),
            t_min: 1.0,
        },
        ModelZooEntry {
            name: "wc3-multi",
            description: "wc3 with unrewarded switches: two optimal recurrent classes",
            model: wc3_multi(),
            weakly_communicating: true,
            rstar: Some(1.0),
            t_min: 1.0,
        },
        ModelZooEntry {
            name: "smdp-exp",
            description: "exponential holding times (t_min = 0.5) and random rewards",
            model: smdp_exp(),
            weakly_communicating: true,
            rstar: Some(SMDP_EXP_RSTAR),
            t_min: 0.5,
        },
        ModelZooEntry {
            name: "two-loops",
            description: "two absorbing states, not weakly communicating",
            model: two_loops(),
            weakly_communicating: false,
            rstar: None,
            t_min: 1.0,
        },
    ]
}

/// Gain of the policy taking action 0 in both states. Its stationary law
/// is (5/8, 3/8), so the rate is (5/8 + 9/8) / (5/16 + 12/16) = 28/17.
pub const SMDP_EXP_RSTAR: f64 = 28.0 / 17.0;

pub fn zoo_entry(name: &str) -> Option<ModelZooEntry> {
    model_zoo().into_iter().find(|e| e.name == name)
}

pub fn zoo_names() -> Vec<&'static str> {
    model_zoo().iter().map(|e| e.name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_certifies() {
        for entry in model_zoo() {
            entry.certify().unwrap_or_else(|e| panic!("{}: {e}", entry.name));
        }
    }

    #[test]
    fn wrong_record_is_caught() {
        let mut entry = zoo_entry("wc3").unwrap();
        entry.rstar = Some(0.5);
        assert!(entry.certify().is_err());
        let mut entry = zoo_entry("two-loops").unwrap();
        entry.weakly_communicating = true;
        assert!(entry.certify().is_err());
    }

    #[test]
    fn names_are_unique() {
        let mut names = zoo_names();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), model_zoo().len());
        assert!(zoo_entry("nope").is_none());
    }

    #[test]
    fn smdp_exp_optimum_is_action_zero_everywhere() {
        let report = gain_oracle(&smdp_exp()).unwrap();
        let optimal: Vec<_> = report.optimal_policies().collect();
        assert_eq!(optimal.len(), 1);
        assert_eq!(optimal[0].actions(), &[0, 0]);
    }
}
