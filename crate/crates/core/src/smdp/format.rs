//! JSON model files.
//!
//! ```json
//! {"num_states": 1, "num_actions": 1,
//!  "entries": [{"s": 0, "a": 0, "branches": [
//!     {"p": 1.0, "next": 0,
//!      "holding": {"kind": "exponential", "params": {"rate": 2.0}},
//!      "reward": {"kind": "gaussian", "params": {"mean": 1.0, "stddev": 0.5}}}]}]}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Branch, SmdpModel, TransitionLaw};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub s: usize,
    pub a: usize,
    pub branches: Vec<Branch>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub entries: Vec<ModelEntry>,
}

impl TryFrom<ModelFile> for SmdpModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        let d = file.num_states * file.num_actions;
        let mut laws: Vec<Option<TransitionLaw>> = vec![None; d];
        for entry in file.entries {
            if entry.s >= file.num_states || entry.a >= file.num_actions {
                return Err(Error::InvalidModel(format!("entry (s={}, a={}) out of range", entry.s, entry.a)));
            }
            let slot = &mut laws[entry.s * file.num_actions + entry.a];
            if slot.is_some() {
                return Err(Error::InvalidModel(format!("duplicate entry (s={}, a={})", entry.s, entry.a)));
            }
            *slot = Some(TransitionLaw::new(entry.branches));
        }
        let laws = laws
            .into_iter()
            .enumerate()
            .map(|(pair, law)| {
                law.ok_or_else(|| {
                    Error::InvalidModel(format!(
                        "missing entry (s={}, a={})",
                        pair / file.num_actions,
                        pair % file.num_actions
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SmdpModel::new(file.num_states, file.num_actions, laws)
    }
}

impl From<&SmdpModel> for ModelFile {
    fn from(model: &SmdpModel) -> Self {
        let entries = model
            .laws()
            .iter()
            .enumerate()
            .map(|(pair, law)| ModelEntry {
                s: pair / model.num_actions(),
                a: pair % model.num_actions(),
                branches: law.branches.clone(),
            })
            .collect();
        ModelFile { num_states: model.num_states(), num_actions: model.num_actions(), entries }
    }
}

impl Serialize for SmdpModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ModelFile::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SmdpModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = ModelFile::deserialize(deserializer)?;
        SmdpModel::try_from(file).map_err(serde::de::Error::custom)
    }
}

impl SmdpModel {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        SmdpModel::try_from(file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_path(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smdp::{HoldingTimeDist, RewardDist};
    use proptest::prelude::*;

    #[test]
    fn parses_documented_example() {
        let text = r#"{"num_states": 1, "num_actions": 1,
          "entries": [{"s": 0, "a": 0, "branches": [
            {"p": 1.0, "next": 0,
             "holding": {"kind": "exponential", "params": {"rate": 2.0}},
             "reward": {"kind": "gaussian", "params": {"mean": 1.0, "stddev": 0.5}}}]}]}"#;
        let model = SmdpModel::from_json_str(text).unwrap();
        assert_eq!(model.expected_holding(0), 0.5);
        assert_eq!(model.expected_reward(0), 1.0);
    }

    #[test]
    fn missing_and_duplicate_entries_rejected() {
        let missing = r#"{"num_states": 1, "num_actions": 2, "entries": [
            {"s": 0, "a": 0, "branches": [{"p": 1.0, "next": 0,
              "holding": {"kind": "deterministic", "params": {"value": 1.0}},
              "reward": {"kind": "deterministic", "params": {"value": 0.0}}}]}]}"#;
        assert!(matches!(SmdpModel::from_json_str(missing), Err(Error::InvalidModel(_))));
        let entry = r#"{"s": 0, "a": 0, "branches": [{"p": 1.0, "next": 0,
              "holding": {"kind": "deterministic", "params": {"value": 1.0}},
              "reward": {"kind": "deterministic", "params": {"value": 0.0}}}]}"#;
        let dup = format!(r#"{{"num_states": 1, "num_actions": 1, "entries": [{entry}, {entry}]}}"#);
        assert!(matches!(SmdpModel::from_json_str(&dup), Err(Error::InvalidModel(_))));
    }

    fn arb_holding() -> impl Strategy<Value = HoldingTimeDist> {
        prop_oneof![
            (1e-3..1e3f64).prop_map(|value| HoldingTimeDist::Deterministic { value }),
            (1e-3..1e3f64).prop_map(|rate| HoldingTimeDist::Exponential { rate }),
            (0.01..0.99f64, 1e-3..10.0f64)
                .prop_map(|(p, t)| HoldingTimeDist::DiscreteSupport { support: vec![(p, 0.0), (1.0 - p, t)] }),
        ]
    }

    fn arb_reward() -> impl Strategy<Value = RewardDist> {
        prop_oneof![
            (-1e6..1e6f64).prop_map(|value| RewardDist::Deterministic { value }),
            (-1e3..1e3f64, 0.0..1e2f64).prop_map(|(mean, stddev)| RewardDist::Gaussian { mean, stddev }),
            (0.01..0.99f64, -5.0..5.0f64, -5.0..5.0f64)
                .prop_map(|(p, a, b)| RewardDist::DiscreteSupport { support: vec![(p, a), (1.0 - p, b)] }),
        ]
    }

    fn arb_model() -> impl Strategy<Value = SmdpModel> {
        (1usize..4, 1usize..3).prop_flat_map(|(ns, na)| {
            prop::collection::vec(
                (0.05..0.95f64, 0..ns, 0..ns, arb_holding(), arb_holding(), arb_reward(), arb_reward()),
                ns * na,
            )
            .prop_map(move |laws| {
                let laws = laws
                    .into_iter()
                    .map(|(p, n1, n2, h1, h2, r1, r2)| {
                        TransitionLaw::new(vec![Branch::new(p, n1, h1, r1), Branch::new(1.0 - p, n2, h2, r2)])
                    })
                    .collect();
                SmdpModel::new(ns, na, laws).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(model in arb_model()) {
            let once = SmdpModel::from_json_str(&model.to_json_string()).unwrap();
            prop_assert_eq!(&once, &model);
            let twice = SmdpModel::from_json_str(&once.to_json_string()).unwrap();
            prop_assert_eq!(once.to_json_string(), twice.to_json_string());
            for (a, b) in model.rewards().iter().zip(twice.rewards()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
