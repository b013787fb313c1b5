use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::learner::{Learner, LearnerConfig};
use crate::error::{Error, Result};
use crate::rate::RateFunction;
use crate::schedules::{validate_params, ParamThresholds, UpdateCounters, UpdateMode, ValidationReport};
use crate::smdp::{sup_norm, ModelFile, QTable, SmdpModel};
use crate::solvers::ShiftedOperator;

pub const DEFAULT_SNAPSHOT_EVERY: u64 = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub learner: LearnerConfig,
    pub thresholds: ParamThresholds,
    /// Run even when the parameter validator rejects the configuration.
    #[serde(default)]
    pub override_validation: bool,
    pub iters: u64,
    pub checkpoint_every: u64,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: u64,
    pub seed: u64,
    #[serde(default)]
    pub q0: Option<Vec<f64>>,
    #[serde(default)]
    pub t0: Option<Vec<f64>>,
}

fn default_snapshot_every() -> u64 {
    DEFAULT_SNAPSHOT_EVERY
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Checkpoint {
    pub n: u64,
    pub f_q: f64,
    /// `‖h(Q_n)‖∞` at `ᾱ = t_min`.
    pub residual_inf: f64,
    /// `max |T_n − t_sa|`.
    pub t_err_max: f64,
    pub q: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivergenceRecord {
    pub n: u64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunTrace {
    pub seed: u64,
    pub config_hash: String,
    pub validation: ValidationReport,
    /// True when the run went ahead despite a failed validation.
    pub overridden: bool,
    pub checkpoints: Vec<Checkpoint>,
    /// Update counters at each checkpoint.
    pub counter_history: Vec<UpdateCounters>,
    pub final_q: QTable,
    pub final_t: Vec<f64>,
    pub divergence: Option<DivergenceRecord>,
}

impl RunTrace {
    /// Writes `n,f_q,residual_inf,t_err_max` plus `q_0..q_{d-1}` columns,
    /// filled on snapshot rows only.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let d = self.final_q.len();
        let with_q = self.checkpoints.iter().any(|c| c.q.is_some());
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["n".to_string(), "f_q".into(), "residual_inf".into(), "t_err_max".into()];
        if with_q {
            header.extend((0..d).map(|i| format!("q_{i}")));
        }
        out.write_record(&header)?;
        for c in &self.checkpoints {
            let mut row = vec![c.n.to_string(), c.f_q.to_string(), c.residual_inf.to_string(), c.t_err_max.to_string()];
            if with_q {
                match &c.q {
                    Some(q) => row.extend(q.iter().map(f64::to_string)),
                    None => row.extend(std::iter::repeat_n(String::new(), d)),
                }
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn snapshots(&self) -> impl Iterator<Item = (u64, &[f64])> {
        self.checkpoints.iter().filter_map(|c| c.q.as_deref().map(|q| (c.n, q)))
    }
}

/// SHA-256 of the model, `f` and run configuration with the seed cleared.
pub fn config_hash(model: &SmdpModel, f: &RateFunction, config: &RunConfig) -> Result<String> {
    let mut unseeded = config.clone();
    unseeded.seed = 0;
    let text = serde_json::to_string(&(ModelFile::from(model), f, &unseeded))?;
    Ok(Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
}

/// Runs the learner for `config.iters` iterations.
///
/// A divergent run ends early and returns its partial trace with
/// `divergence` set.
pub fn run(model: &SmdpModel, f: &RateFunction, config: &RunConfig) -> Result<RunTrace> {
    if !f.is_sistr_by_construction() {
        return Err(Error::Parameter("learning needs a SISTr rate function".into()));
    }
    f.validate()?;
    if config.checkpoint_every == 0 || config.snapshot_every == 0 {
        return Err(Error::Parameter("checkpoint and snapshot intervals must be positive".into()));
    }
    let scheduler = &config.learner.scheduler;
    let validation = validate_params(
        &config.thresholds,
        &config.learner.alpha,
        &config.learner.beta,
        scheduler,
        UpdateMode::of(scheduler),
    );
    if !validation.passed && !config.override_validation {
        return validation.into_result().map(|_| unreachable!("failed report"));
    }
    let overridden = !validation.passed;
    let config_hash = config_hash(model, f, config)?;
    let mut learner =
        Learner::new(model, f, config.learner.clone(), config.seed, config.q0.clone(), config.t0.clone())?;
    let op = ShiftedOperator::at_t_min(model)?;

    let mut checkpoints = Vec::new();
    let mut counter_history = Vec::new();
    let mut record = |learner: &Learner<'_>, n: u64| -> Result<()> {
        let state = learner.state();
        let t_err_max = state.t.iter().zip(model.holdings()).map(|(est, t)| (est - t).abs()).fold(0.0, f64::max);
        let snapshot = n.is_multiple_of(config.snapshot_every) || n == config.iters;
        checkpoints.push(Checkpoint {
            n,
            f_q: f.value(&state.q),
            residual_inf: sup_norm(&op.h(f, &state.q)?),
            t_err_max,
            q: snapshot.then(|| state.q.to_vec()),
        });
        counter_history.push(state.counters.clone());
        Ok(())
    };

    record(&learner, 0)?;
    let mut divergence = None;
    for n in 1..=config.iters {
        match learner.step() {
            Ok(_) => {}
            Err(Error::Divergence { n, detail }) => {
                divergence = Some(DivergenceRecord { n, detail });
                break;
            }
            Err(e) => return Err(e),
        }
        if n.is_multiple_of(config.checkpoint_every) || n == config.iters {
            record(&learner, n)?;
        }
    }
    let state = learner.state();
    Ok(RunTrace {
        seed: config.seed,
        config_hash,
        validation,
        overridden,
        checkpoints,
        counter_history,
        final_q: state.q.clone(),
        final_t: state.t.clone(),
        divergence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::{AsyncScheduler, FloorSchedule, StepSchedule};
    use crate::smdp::TransitionLaw;

    fn wc3(reward: f64) -> SmdpModel {
        let d = TransitionLaw::deterministic;
        SmdpModel::new(
            3,
            2,
            vec![
                d(0, 1.0, reward),
                d(1, 1.0, reward),
                d(1, 1.0, reward),
                d(0, 1.0, reward),
                d(0, 1.0, 0.0),
                d(0, 1.0, 0.0),
            ],
        )
        .unwrap()
    }

    fn config(iters: u64, seed: u64) -> RunConfig {
        let alpha = StepSchedule::Class2 { a: 4.0 };
        RunConfig {
            learner: LearnerConfig {
                beta: StepSchedule::ScaledCopy { base: Box::new(alpha.clone()), factor: 4.0 },
                alpha,
                eta: FloorSchedule::InverseLog,
                scheduler: AsyncScheduler::random_walk(6, 0.5).unwrap(),
                gauss_seidel: false,
            },
            thresholds: ParamThresholds::new(1.0, 1.0, 4.0, 0.49).unwrap(),
            override_validation: false,
            iters,
            checkpoint_every: 1000,
            snapshot_every: 10_000,
            seed,
            q0: None,
            t0: None,
        }
    }

    #[test]
    fn trace_layout() {
        let model = wc3(1.0);
        let f = RateFunction::mean(6).unwrap();
        let trace = run(&model, &f, &config(25_500, 1)).unwrap();
        let ns: Vec<u64> = trace.checkpoints.iter().map(|c| c.n).collect();
        assert_eq!(ns.first(), Some(&0));
        assert_eq!(ns.last(), Some(&25_500));
        assert!(ns.windows(2).all(|w| w[0] < w[1]));
        let snaps: Vec<u64> = trace.snapshots().map(|(n, _)| n).collect();
        assert_eq!(snaps, vec![0, 10_000, 20_000, 25_500]);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "n,f_q,residual_inf,t_err_max,q_0,q_1,q_2,q_3,q_4,q_5");
        assert!(lines.next().unwrap().starts_with("0,0,"));
        assert!(lines.next().unwrap().ends_with(",,,,,,"));
    }

    #[test]
    fn rejected_parameters_need_override() {
        let model = wc3(1.0);
        let f = RateFunction::mean(6).unwrap();
        let mut cfg = config(100, 1);
        cfg.learner.alpha = StepSchedule::Class1 { a: 5.0 };
        assert!(run(&model, &f, &cfg).unwrap_err().is_validation());
        cfg.override_validation = true;
        let trace = run(&model, &f, &cfg).unwrap();
        assert!(trace.overridden);
    }

    #[test]
    fn reference_pair_is_refused() {
        let model = wc3(1.0);
        let f = RateFunction::reference_pair(&model, 0, 0).unwrap();
        assert!(matches!(run(&model, &f, &config(10, 1)), Err(Error::Parameter(_))));
    }

    #[test]
    fn hash_ignores_seed_but_not_parameters() {
        let model = wc3(1.0);
        let f = RateFunction::mean(6).unwrap();
        let a = config_hash(&model, &f, &config(100, 1)).unwrap();
        assert_eq!(a, config_hash(&model, &f, &config(100, 2)).unwrap());
        assert_ne!(a, config_hash(&model, &f, &config(101, 1)).unwrap());
        assert_ne!(a, config_hash(&wc3(2.0), &f, &config(100, 1)).unwrap());
        assert_eq!(a.len(), 64);
    }
}
