//! Finite semi-Markov decision processes.
//!
//! A model assigns to every state-action pair a [`TransitionLaw`]: a finite
//! mixture of branches, each fixing the next state and carrying its own
//! holding-time and reward distribution. Only distribution families with
//! closed-form first and second moments are admitted, so expected rewards
//! `r_sa`, expected holding times `t_sa` and the marginal next-state law
//! `p_ss'^a` are exact.

mod chain;
mod communication;
mod format;

pub use chain::{induced_chain, InducedChain, RecurrentClass};
pub use communication::{
    classify_communication, strongly_connected_components, CommunicationClass, NotWeaklyCommunicating,
};
pub use format::ModelFile;

use std::ops::{Deref, DerefMut};

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on branch and support probabilities summing to one.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Holding-time law attached to one branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum HoldingTimeDist {
    Deterministic {
        value: f64,
    },
    Exponential {
        rate: f64,
    },
    /// Finite support given as `(probability, time)` pairs.
    DiscreteSupport {
        support: Vec<(f64, f64)>,
    },
}

/// Reward law attached to one branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum RewardDist {
    Deterministic {
        value: f64,
    },
    Gaussian {
        mean: f64,
        stddev: f64,
    },
    /// Finite support given as `(probability, reward)` pairs.
    DiscreteSupport {
        support: Vec<(f64, f64)>,
    },
}

fn validate_support(support: &[(f64, f64)], what: &str) -> Result<f64> {
    if support.is_empty() {
        return Err(Error::InvalidModel(format!("{what}: empty support")));
    }
    let mut total = 0.0;
    for &(p, v) in support {
        if !(p.is_finite() && p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidModel(format!("{what}: probability {p} outside (0, 1]")));
        }
        if !v.is_finite() {
            return Err(Error::InvalidModel(format!("{what}: non-finite support point {v}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(Error::InvalidModel(format!("{what}: probabilities sum to {total}")));
    }
    Ok(total)
}

fn sample_support<R: Rng + ?Sized>(support: &[(f64, f64)], rng: &mut R) -> f64 {
    let total: f64 = support.iter().map(|&(p, _)| p).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for &(p, v) in support {
        acc += p;
        if u < acc {
            return v;
        }
    }
    support[support.len() - 1].1
}

fn support_moments(support: &[(f64, f64)]) -> (f64, f64) {
    let total: f64 = support.iter().map(|&(p, _)| p).sum();
    let mean = support.iter().map(|&(p, v)| p * v).sum::<f64>() / total;
    let second = support.iter().map(|&(p, v)| p * v * v).sum::<f64>() / total;
    (mean, second)
}

impl HoldingTimeDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            HoldingTimeDist::Deterministic { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return Err(Error::InvalidModel(format!("deterministic holding time {value} must be > 0")));
                }
            }
            HoldingTimeDist::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::InvalidModel(format!("exponential rate {rate} must be > 0")));
                }
            }
            HoldingTimeDist::DiscreteSupport { support } => {
                validate_support(support, "holding-time support")?;
                if support.iter().any(|&(_, t)| t < 0.0) {
                    return Err(Error::InvalidModel("negative holding time in support".into()));
                }
                if !support.iter().any(|&(p, t)| p > 0.0 && t > 0.0) {
                    return Err(Error::InvalidModel("holding-time support puts all mass at zero".into()));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            HoldingTimeDist::Deterministic { value } => *value,
            HoldingTimeDist::Exponential { rate } => 1.0 / rate,
            HoldingTimeDist::DiscreteSupport { support } => support_moments(support).0,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            HoldingTimeDist::Deterministic { value } => value * value,
            HoldingTimeDist::Exponential { rate } => 2.0 / (rate * rate),
            HoldingTimeDist::DiscreteSupport { support } => support_moments(support).1,
        }
    }

    /// `P(tau > eps)` in closed form.
    pub fn mass_above(&self, eps: f64) -> f64 {
        match self {
            HoldingTimeDist::Deterministic { value } => f64::from(u8::from(*value > eps)),
            HoldingTimeDist::Exponential { rate } => (-rate * eps.max(0.0)).exp(),
            HoldingTimeDist::DiscreteSupport { support } => {
                let total: f64 = support.iter().map(|&(p, _)| p).sum();
                support.iter().filter(|&&(_, t)| t > eps).map(|&(p, _)| p).sum::<f64>() / total
            }
        }
    }

    /// A positive `eps` with `P(tau > eps) > 0`.
    fn positive_mass_witness(&self) -> f64 {
        match self {
            HoldingTimeDist::Deterministic { value } => value / 2.0,
            HoldingTimeDist::Exponential { rate } => 1.0 / rate,
            HoldingTimeDist::DiscreteSupport { support } => support.iter().map(|&(_, t)| t).fold(0.0, f64::max) / 2.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            HoldingTimeDist::Deterministic { value } => *value,
            HoldingTimeDist::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            HoldingTimeDist::DiscreteSupport { support } => sample_support(support, rng),
        }
    }
}

impl RewardDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            RewardDist::Deterministic { value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidModel(format!("non-finite reward {value}")));
                }
            }
            RewardDist::Gaussian { mean, stddev } => {
                if !(mean.is_finite() && stddev.is_finite() && *stddev >= 0.0) {
                    return Err(Error::InvalidModel(format!("gaussian reward ({mean}, {stddev}) invalid")));
                }
            }
            RewardDist::DiscreteSupport { support } => {
                validate_support(support, "reward support")?;
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            RewardDist::Deterministic { value } => *value,
            RewardDist::Gaussian { mean, .. } => *mean,
            RewardDist::DiscreteSupport { support } => support_moments(support).0,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            RewardDist::Deterministic { value } => value * value,
            RewardDist::Gaussian { mean, stddev } => mean * mean + stddev * stddev,
            RewardDist::DiscreteSupport { support } => support_moments(support).1,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            RewardDist::Deterministic { value } => *value,
            RewardDist::Gaussian { mean, stddev } => {
                if *stddev == 0.0 {
                    *mean
                } else {
                    Normal::new(*mean, *stddev).expect("validated stddev").sample(rng)
                }
            }
            RewardDist::DiscreteSupport { support } => sample_support(support, rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub p: f64,
    pub next: usize,
    pub holding: HoldingTimeDist,
    pub reward: RewardDist,
}

impl Branch {
    pub fn new(p: f64, next: usize, holding: HoldingTimeDist, reward: RewardDist) -> Self {
        Branch { p, next, holding, reward }
    }
}

/// Joint law of `(next state, holding time, reward)` for one state-action pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionLaw {
    pub branches: Vec<Branch>,
}

impl TransitionLaw {
    pub fn new(branches: Vec<Branch>) -> Self {
        TransitionLaw { branches }
    }

    /// One branch with probability one.
    pub fn single(next: usize, holding: HoldingTimeDist, reward: RewardDist) -> Self {
        TransitionLaw { branches: vec![Branch::new(1.0, next, holding, reward)] }
    }

    /// Deterministic next state, holding time and reward.
    pub fn deterministic(next: usize, tau: f64, reward: f64) -> Self {
        Self::single(next, HoldingTimeDist::Deterministic { value: tau }, RewardDist::Deterministic { value: reward })
    }

    fn validate(&self, num_states: usize) -> Result<()> {
        if self.branches.is_empty() {
            return Err(Error::InvalidModel("transition law without branches".into()));
        }
        let mut total = 0.0;
        for b in &self.branches {
            if !(b.p.is_finite() && b.p > 0.0 && b.p <= 1.0) {
                return Err(Error::InvalidModel(format!("branch probability {} outside (0, 1]", b.p)));
            }
            if b.next >= num_states {
                return Err(Error::InvalidModel(format!("next state {} out of range", b.next)));
            }
            b.holding.validate()?;
            b.reward.validate()?;
            total += b.p;
        }
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::InvalidModel(format!("branch probabilities sum to {total}")));
        }
        Ok(())
    }
}

/// One sampled transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub tau: f64,
    pub reward: f64,
}

/// Closed-form expectations of a model, indexed by pair `s * |A| + a`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelExpectations {
    pub reward: Vec<f64>,
    pub holding: Vec<f64>,
    /// Dense `p_ss'^a`, one row of length `|S|` per pair.
    pub transition: Vec<Vec<f64>>,
}

/// A finite SMDP with every action admissible in every state.
///
/// Immutable after construction. Branch probabilities are stored as given
/// (so that serialization is exact) and renormalized in the derived tables.
#[derive(Clone, Debug)]
pub struct SmdpModel {
    num_states: usize,
    num_actions: usize,
    laws: Vec<TransitionLaw>,
    reward: Vec<f64>,
    holding: Vec<f64>,
    reward_second: Vec<f64>,
    holding_second: Vec<f64>,
    /// Merged sparse next-state law per pair.
    successors: Vec<Vec<(usize, f64)>>,
    /// Cumulative normalized branch probabilities per pair.
    cumulative: Vec<Vec<f64>>,
}

impl PartialEq for SmdpModel {
    fn eq(&self, other: &Self) -> bool {
        self.num_states == other.num_states && self.num_actions == other.num_actions && self.laws == other.laws
    }
}

impl SmdpModel {
    /// Builds a model from laws listed in pair order `s * |A| + a`.
    pub fn new(num_states: usize, num_actions: usize, laws: Vec<TransitionLaw>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidModel("model needs at least one state and one action".into()));
        }
        if laws.len() != num_states * num_actions {
            return Err(Error::InvalidModel(format!(
                "expected {} transition laws, got {}",
                num_states * num_actions,
                laws.len()
            )));
        }
        let d = laws.len();
        let mut model = SmdpModel {
            num_states,
            num_actions,
            reward: Vec::with_capacity(d),
            holding: Vec::with_capacity(d),
            reward_second: Vec::with_capacity(d),
            holding_second: Vec::with_capacity(d),
            successors: Vec::with_capacity(d),
            cumulative: Vec::with_capacity(d),
            laws,
        };
        for (pair, law) in model.laws.iter().enumerate() {
            law.validate(num_states).map_err(|e| match e {
                Error::InvalidModel(m) => {
                    Error::InvalidModel(format!("pair (s={}, a={}): {m}", pair / num_actions, pair % num_actions))
                }
                other => other,
            })?;
            let total: f64 = law.branches.iter().map(|b| b.p).sum();
            let mut r = 0.0;
            let mut t = 0.0;
            let mut r2 = 0.0;
            let mut t2 = 0.0;
            let mut dense = vec![0.0; num_states];
            let mut cumulative = Vec::with_capacity(law.branches.len());
            let mut acc = 0.0;
            for b in &law.branches {
                let p = b.p / total;
                r += p * b.reward.mean();
                t += p * b.holding.mean();
                r2 += p * b.reward.second_moment();
                t2 += p * b.holding.second_moment();
                dense[b.next] += p;
                acc += p;
                cumulative.push(acc);
            }
            if let Some(last) = cumulative.last_mut() {
                *last = 1.0;
            }
            if !(t > 0.0) {
                return Err(Error::InvalidModel(format!("pair {pair}: expected holding time is zero")));
            }
            model.reward.push(r);
            model.holding.push(t);
            model.reward_second.push(r2);
            model.holding_second.push(t2);
            model.successors.push(dense.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, &p)| (s, p)).collect());
            model.cumulative.push(cumulative);
        }
        Ok(model)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Dimension `|S| * |A|` of Q-tables over this model.
    pub fn num_pairs(&self) -> usize {
        self.laws.len()
    }

    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    pub fn check_pair(&self, s: usize, a: usize) -> Result<usize> {
        if s >= self.num_states || a >= self.num_actions {
            return Err(Error::Domain(format!(
                "pair (s={s}, a={a}) outside {}x{} model",
                self.num_states, self.num_actions
            )));
        }
        Ok(self.pair_index(s, a))
    }

    pub fn law(&self, s: usize, a: usize) -> Result<&TransitionLaw> {
        Ok(&self.laws[self.check_pair(s, a)?])
    }

    pub fn laws(&self) -> &[TransitionLaw] {
        &self.laws
    }

    /// Expected reward `r_sa` by pair index.
    pub fn expected_reward(&self, pair: usize) -> f64 {
        self.reward[pair]
    }

    /// Expected holding time `t_sa` by pair index.
    pub fn expected_holding(&self, pair: usize) -> f64 {
        self.holding[pair]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn holdings(&self) -> &[f64] {
        &self.holding
    }

    pub fn reward_second_moment(&self, pair: usize) -> f64 {
        self.reward_second[pair]
    }

    pub fn holding_second_moment(&self, pair: usize) -> f64 {
        self.holding_second[pair]
    }

    /// Nonzero entries of `p_ss'^a` for a pair.
    pub fn successors(&self, pair: usize) -> &[(usize, f64)] {
        &self.successors[pair]
    }

    /// `t_min = min t_sa`.
    pub fn t_min(&self) -> f64 {
        self.holding.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// An `eps > 0` with `P_sa(tau <= eps) < 1` for every pair.
    pub fn holding_epsilon(&self) -> f64 {
        self.laws
            .iter()
            .map(|law| law.branches.iter().map(|b| b.holding.positive_mass_witness()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min)
    }

    /// `max_sa P_sa(tau <= eps)`.
    pub fn max_mass_at_or_below(&self, eps: f64) -> f64 {
        self.laws
            .iter()
            .map(|law| {
                let total: f64 = law.branches.iter().map(|b| b.p).sum();
                1.0 - law.branches.iter().map(|b| b.p / total * b.holding.mass_above(eps)).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Exact expectation tables.
    pub fn expectations(&self) -> Result<ModelExpectations> {
        if let Some(pair) = self.holding.iter().position(|&t| !(t > 0.0)) {
            return Err(Error::InvalidModel(format!("t_sa = 0 at pair {pair}")));
        }
        let transition = self
            .successors
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; self.num_states];
                for &(s, p) in row {
                    dense[s] = p;
                }
                dense
            })
            .collect();
        Ok(ModelExpectations { reward: self.reward.clone(), holding: self.holding.clone(), transition })
    }

    /// Draws `(S', tau, R)` from `P_sa`.
    pub fn sample_transition<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<Transition> {
        let pair = self.check_pair(s, a)?;
        Ok(self.sample_pair(pair, rng))
    }

    /// Sampling by pair index; the index must be in range.
    pub fn sample_pair<R: Rng + ?Sized>(&self, pair: usize, rng: &mut R) -> Transition {
        let law = &self.laws[pair];
        let cumulative = &self.cumulative[pair];
        let branch = if law.branches.len() == 1 {
            &law.branches[0]
        } else {
            let u = rng.random::<f64>();
            let k = cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1);
            &law.branches[k]
        };
        Transition { next: branch.next, tau: branch.holding.sample(rng), reward: branch.reward.sample(rng) }
    }

    /// Copy of the model with every reward replaced by a deterministic zero.
    pub fn with_zero_rewards(&self) -> SmdpModel {
        let laws = self
            .laws
            .iter()
            .map(|law| TransitionLaw {
                branches: law
                    .branches
                    .iter()
                    .map(|b| Branch { reward: RewardDist::Deterministic { value: 0.0 }, ..b.clone() })
                    .collect(),
            })
            .collect();
        SmdpModel::new(self.num_states, self.num_actions, laws).expect("reward change keeps validity")
    }
}

/// State-action values, stored by pair index `s * |A| + a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        QTable { num_actions, values: vec![0.0; num_states * num_actions] }
    }

    pub fn for_model(model: &SmdpModel) -> Self {
        Self::zeros(model.num_states(), model.num_actions())
    }

    pub fn from_vec(num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if num_actions == 0 || !values.len().is_multiple_of(num_actions) || values.is_empty() {
            return Err(Error::Domain(format!(
                "{} values do not form a table with {num_actions} actions",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite Q entry {v}")));
        }
        Ok(QTable { num_actions, values })
    }

    pub fn num_states(&self) -> usize {
        self.values.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn state_max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_distance(&self, other: &QTable) -> f64 {
        sup_distance(&self.values, &other.values)
    }
}

impl Deref for QTable {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for QTable {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// `max_s max_a q(s, a)` per state, for a flat table with `num_actions` columns.
pub(crate) fn state_maxima(q: &[f64], num_actions: usize) -> Vec<f64> {
    q.chunks_exact(num_actions).map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
}

pub(crate) fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn sup_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// A stationary nonrandomized policy.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(model: &SmdpModel, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != model.num_states() {
            return Err(Error::Domain(format!(
                "policy covers {} states, model has {}",
                actions.len(),
                model.num_states()
            )));
        }
        if let Some(a) = actions.iter().find(|&&a| a >= model.num_actions()) {
            return Err(Error::Domain(format!("action {a} out of range")));
        }
        Ok(DeterministicPolicy { actions })
    }

    pub(crate) fn from_actions(actions: Vec<usize>) -> Self {
        DeterministicPolicy { actions }
    }

    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
}
