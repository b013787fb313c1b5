use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::RateFunction;
use crate::schedules::{AsyncScheduler, FloorSchedule, SchedulerState, StepSchedule, UpdateCounters};
use crate::smdp::{state_maxima, QTable, SmdpModel, Transition};

/// `‖Q‖∞` beyond which a run is declared divergent.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub alpha: StepSchedule,
    pub beta: StepSchedule,
    #[serde(default)]
    pub eta: FloorSchedule,
    pub scheduler: AsyncScheduler,
    /// Let later members of `Y_n` read values already updated in the same
    /// iteration. Off by default: every member reads `Q_n`.
    #[serde(default)]
    pub gauss_seidel: bool,
}

impl LearnerConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        self.alpha.validate()?;
        self.beta.validate()?;
        self.eta.validate()?;
        self.scheduler.validate(dim)
    }
}

#[derive(Clone, Debug)]
pub struct LearnerState {
    pub q: QTable,
    pub t: Vec<f64>,
    pub counters: UpdateCounters,
    pub scheduler: SchedulerState,
    /// One generator per pair; its position counts the draws for that pair.
    streams: Vec<ChaCha8Rng>,
    scheduler_rng: ChaCha8Rng,
}

impl LearnerState {
    pub fn n(&self) -> u64 {
        self.counters.n
    }
}

/// What one iteration did.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub update_set: Vec<usize>,
    pub samples: Vec<Transition>,
    /// `f(Q_n)`, shared by every member of the update set.
    pub f_value: f64,
    pub eta: f64,
}

/// Applies one iteration given its update set, samples and per-member
/// stepsizes. Entries outside `update_set` are left untouched.
#[allow(clippy::too_many_arguments)]
pub fn apply_update(
    q: &mut [f64],
    t: &mut [f64],
    num_actions: usize,
    update_set: &[usize],
    samples: &[Transition],
    f_value: f64,
    eta: f64,
    alpha_steps: &[f64],
    beta_steps: &[f64],
    gauss_seidel: bool,
) {
    let increment = |q: &[f64], maxima: &[f64], i: usize, sample: &Transition, t_i: f64, alpha: f64| {
        q[i] + alpha * ((sample.reward + maxima[sample.next] - q[i]) / t_i.max(eta) - f_value)
    };
    if gauss_seidel {
        for (k, &i) in update_set.iter().enumerate() {
            let maxima = state_maxima(q, num_actions);
            q[i] = increment(q, &maxima, i, &samples[k], t[i], alpha_steps[k]);
            t[i] += beta_steps[k] * (samples[k].tau - t[i]);
        }
    } else {
        let maxima = state_maxima(q, num_actions);
        let updated: Vec<f64> = update_set
            .iter()
            .enumerate()
            .map(|(k, &i)| increment(q, &maxima, i, &samples[k], t[i], alpha_steps[k]))
            .collect();
        for (k, &i) in update_set.iter().enumerate() {
            q[i] = updated[k];
            t[i] += beta_steps[k] * (samples[k].tau - t[i]);
        }
    }
}

pub struct Learner<'a> {
    model: &'a SmdpModel,
    f: &'a RateFunction,
    config: LearnerConfig,
    state: LearnerState,
}

impl<'a> Learner<'a> {
    /// `q0` defaults to zero and `t0` to `η_0` in every entry.
    pub fn new(
        model: &'a SmdpModel,
        f: &'a RateFunction,
        config: LearnerConfig,
        seed: u64,
        q0: Option<Vec<f64>>,
        t0: Option<Vec<f64>>,
    ) -> Result<Self> {
        let d = model.num_pairs();
        config.validate(d)?;
        if f.dim() != d {
            return Err(Error::Domain(format!("f has dimension {}, model has {d} pairs", f.dim())));
        }
        let q = q0.unwrap_or_else(|| vec![0.0; d]);
        let t = t0.unwrap_or_else(|| vec![config.eta.value(0); d]);
        if q.len() != d || t.len() != d {
            return Err(Error::Domain(format!("initial tables need {d} entries")));
        }
        if q.iter().chain(&t).any(|v| !v.is_finite()) || t.iter().any(|&v| v < 0.0) {
            return Err(Error::Parameter("initial tables must be finite, with T ≥ 0".into()));
        }
        let streams = (0..d)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64 + 1);
                rng
            })
            .collect();
        let scheduler = config.scheduler.start(d)?;
        let state = LearnerState {
            q: QTable::from_vec(model.num_actions(), q)?,
            t,
            counters: UpdateCounters::new(d),
            scheduler,
            streams,
            scheduler_rng: ChaCha8Rng::seed_from_u64(seed),
        };
        Ok(Learner { model, f, config, state })
    }

    pub fn state(&self) -> &LearnerState {
        &self.state
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    /// Replaces the holding-time estimates, e.g. to pin them to `t_sa`.
    pub fn set_holding_estimates(&mut self, t: Vec<f64>) -> Result<()> {
        if t.len() != self.state.t.len() {
            return Err(Error::Domain("holding table has the wrong length".into()));
        }
        self.state.t = t;
        Ok(())
    }

    /// Draws `Y_n` and one transition for each member without changing `Q`,
    /// `T` or the counters.
    pub fn draw(&mut self) -> (Vec<usize>, Vec<Transition>) {
        let mut update_set = Vec::new();
        self.config.scheduler.advance(&mut self.state.scheduler, &mut self.state.scheduler_rng, &mut update_set);
        let samples = update_set.iter().map(|&i| self.model.sample_pair(i, &mut self.state.streams[i])).collect();
        (update_set, samples)
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        let (update_set, samples) = self.draw();
        self.apply(update_set, samples)
    }

    /// Applies an iteration with externally supplied draws.
    pub fn apply(&mut self, update_set: Vec<usize>, samples: Vec<Transition>) -> Result<StepOutcome> {
        let n = self.state.counters.n;
        let f_value = self.f.value(&self.state.q);
        let eta = self.config.eta.value(n);
        let nu = &self.state.counters.nu;
        let alpha_steps: Vec<f64> = update_set.iter().map(|&i| self.config.alpha.alpha(nu[i])).collect();
        let beta_steps: Vec<f64> = update_set.iter().map(|&i| self.config.beta.beta(nu[i])).collect();
        apply_update(
            &mut self.state.q,
            &mut self.state.t,
            self.model.num_actions(),
            &update_set,
            &samples,
            f_value,
            eta,
            &alpha_steps,
            &beta_steps,
            self.config.gauss_seidel,
        );
        self.state.counters.record(&update_set);
        if let Some(&i) = update_set.iter().find(|&&i| !(self.state.q[i].abs() <= DIVERGENCE_BOUND)) {
            return Err(Error::Divergence {
                n,
                detail: format!("|Q[{i}]| = {} exceeds {DIVERGENCE_BOUND:e}", self.state.q[i]),
            });
        }
        Ok(StepOutcome { update_set, samples, f_value, eta })
    }
}
