use serde::{Deserialize, Serialize};

use super::scheduler::{AsyncScheduler, UpdateCounters};
use super::step::StepSchedule;
use crate::error::{Error, Result};

/// Default exponent for the drift statistic of asynchronous schedules.
pub const DEFAULT_GAMMA: f64 = 0.49;
/// Indices at which "β_n ≥ ς α_n for all large n" is sampled.
pub const TAIL_CHECK_POINTS: [u64; 4] = [1_000_000, 10_000_000, 100_000_000, 1_000_000_000];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamThresholds {
    /// Lower bound on `t_min = min t_sa`.
    pub t_min_lower_bound: f64,
    /// Upper bound on the Lipschitz constant of `f`.
    pub lipschitz_bound: f64,
    /// `ς` in `β_n ≥ ς α_n`.
    pub sigma: f64,
    pub gamma: f64,
}

impl ParamThresholds {
    pub fn new(t_min_lower_bound: f64, lipschitz_bound: f64, sigma: f64, gamma: f64) -> Result<Self> {
        let th = ParamThresholds { t_min_lower_bound, lipschitz_bound, sigma, gamma };
        th.validate()?;
        Ok(th)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_min_lower_bound.is_finite() && self.t_min_lower_bound > 0.0) {
            return Err(Error::Parameter(format!(
                "t_min lower bound must be positive, got {}",
                self.t_min_lower_bound
            )));
        }
        if !(self.lipschitz_bound.is_finite() && self.lipschitz_bound >= 0.0) {
            return Err(Error::Parameter(format!("Lipschitz bound must be ≥ 0, got {}", self.lipschitz_bound)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Parameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return Err(Error::Parameter(format!("gamma must lie in (0, 1/2), got {}", self.gamma)));
        }
        Ok(())
    }

    /// `A_* = 2 / t_min + L_f`.
    pub fn a_star(&self) -> f64 {
        2.0 / self.t_min_lower_bound + self.lipschitz_bound
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    Asynchronous,
    Synchronous,
}

impl UpdateMode {
    pub fn of(scheduler: &AsyncScheduler) -> Self {
        if scheduler.is_synchronous() {
            UpdateMode::Synchronous
        } else {
            UpdateMode::Asynchronous
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub a_star: f64,
    pub checks: Vec<ParamCheck>,
}

impl ValidationReport {
    pub fn violations(&self) -> impl Iterator<Item = &ParamCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            Err(Error::Validation(self.violations().map(|c| format!("{}: {}", c.name, c.detail)).collect()))
        }
    }
}

/// Checks the stepsize and asynchrony conditions under which the learner
/// converges to a single point.
pub fn validate_params(
    thresholds: &ParamThresholds,
    alpha: &StepSchedule,
    beta: &StepSchedule,
    scheduler: &AsyncScheduler,
    mode: UpdateMode,
) -> ValidationReport {
    let a_star = thresholds.a_star();
    let sigma = thresholds.sigma;
    let mut checks = Vec::new();
    let mut check = |name: &'static str, passed: bool, detail: String| checks.push(ParamCheck { name, passed, detail });

    if let Err(e) = thresholds.validate() {
        check("thresholds", false, e.to_string());
    }
    for (name, s) in [("alpha_schedule", alpha), ("beta_schedule", beta)] {
        if let Err(e) = s.validate() {
            check(name, false, e.to_string());
        }
    }
    check(
        "update_mode",
        UpdateMode::of(scheduler) == mode,
        format!(
            "scheduler {:?} runs in {:?} mode, validated for {mode:?}",
            UpdateMode::of(scheduler),
            UpdateMode::of(scheduler)
        ),
    );

    match alpha {
        StepSchedule::Class1 { a } => {
            check("class1_half_a", a / 2.0 > a_star, format!("A/2 = {} vs A_* = {a_star}", a / 2.0));
            check(
                "class1_gamma_a",
                thresholds.gamma * a > a_star,
                format!("gamma·A = {} vs A_* = {a_star}", thresholds.gamma * a),
            );
        }
        StepSchedule::Class2 { a } => match mode {
            UpdateMode::Asynchronous => check("class2_a", *a > a_star, format!("A = {a} vs A_* = {a_star}")),
            UpdateMode::Synchronous => check("class2_a", true, "A unrestricted for synchronous updates".into()),
        },
        other => check("alpha_class", false, format!("alpha must be class 1 or class 2, got {other:?}")),
    }

    check("sigma", sigma > a_star, format!("sigma = {sigma} vs A_* = {a_star}"));
    let dominated: Vec<u64> =
        TAIL_CHECK_POINTS.iter().copied().filter(|&n| beta.beta(n) < sigma * alpha.alpha(n)).collect();
    check(
        "beta_dominates_alpha",
        dominated.is_empty(),
        if dominated.is_empty() {
            format!("beta_n ≥ sigma·alpha_n at n in {TAIL_CHECK_POINTS:?}")
        } else {
            format!("beta_n < sigma·alpha_n at n in {dominated:?}")
        },
    );
    let ell = beta.decay_exponent();
    let margin = -sigma * ell / 2.0;
    check("beta_decay", margin > a_star, format!("-sigma·ell(beta)/2 = {margin} (ell = {ell}) vs A_* = {a_star}"));

    let passed = checks.iter().all(|c| c.passed);
    ValidationReport { passed, a_star, checks }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsynchronySnapshot {
    pub n: u64,
    pub ratios: Vec<f64>,
    /// `n^γ |ν(n,i)/n − p̂_i|` with `p̂` the terminal ratios.
    pub drift: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsynchronyReport {
    pub n: u64,
    pub min_ratio: f64,
    pub terminal_ratios: Vec<f64>,
    pub snapshots: Vec<AsynchronySnapshot>,
}

/// Update-frequency trends over a sequence of counter checkpoints.
pub fn asynchrony_diagnostics(history: &[UpdateCounters], gamma: f64) -> Result<AsynchronyReport> {
    let last = history.last().ok_or_else(|| Error::Input("no counter checkpoints".into()))?;
    if last.n == 0 {
        return Err(Error::Input("counters need n ≥ 1".into()));
    }
    let terminal = last.ratios();
    let snapshots = history
        .iter()
        .filter(|c| c.n > 0)
        .map(|c| {
            let ratios = c.ratios();
            let scale = (c.n as f64).powf(gamma);
            let drift = ratios.iter().zip(&terminal).map(|(r, p)| scale * (r - p).abs()).collect();
            AsynchronySnapshot { n: c.n, ratios, drift }
        })
        .collect();
    Ok(AsynchronyReport {
        n: last.n,
        min_ratio: terminal.iter().copied().fold(f64::INFINITY, f64::min),
        terminal_ratios: terminal,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn thresholds() -> ParamThresholds {
        ParamThresholds::new(1.0, 1.0, 4.0, 0.4).unwrap()
    }

    fn mc() -> AsyncScheduler {
        AsyncScheduler::random_walk(6, 0.5).unwrap()
    }

    #[test]
    fn a_star_formula() {
        assert_eq!(thresholds().a_star(), 3.0);
        assert_eq!(ParamThresholds::new(0.5, 4.0, 1.0, 0.49).unwrap().a_star(), 8.0);
        assert!(ParamThresholds::new(0.0, 1.0, 1.0, 0.4).is_err());
        assert!(ParamThresholds::new(1.0, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn class2_with_scaled_beta_passes() {
        let alpha = StepSchedule::Class2 { a: 4.0 };
        let beta = StepSchedule::ScaledCopy { base: Box::new(alpha.clone()), factor: 4.0 };
        let report = validate_params(&thresholds(), &alpha, &beta, &mc(), UpdateMode::Asynchronous);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn small_class1_fails_both_conditions() {
        let alpha = StepSchedule::Class1 { a: 5.0 };
        let beta = StepSchedule::ScaledCopy { base: Box::new(alpha.clone()), factor: 4.0 };
        let report = validate_params(&thresholds(), &alpha, &beta, &mc(), UpdateMode::Asynchronous);
        let failed: Vec<_> = report.violations().map(|c| c.name).collect();
        assert!(failed.contains(&"class1_half_a") && failed.contains(&"class1_gamma_a"), "{failed:?}");
        assert!(report.into_result().unwrap_err().is_validation());
    }

    #[test]
    fn power_law_beta_is_rejected() {
        let alpha = StepSchedule::Class2 { a: 4.0 };
        let beta = StepSchedule::PowerLaw { scale: 1.0, exponent: 0.75 };
        let report = validate_params(&thresholds(), &alpha, &beta, &mc(), UpdateMode::Asynchronous);
        let failed: Vec<_> = report.violations().map(|c| c.name).collect();
        assert_eq!(failed, vec!["beta_decay"]);
    }

    #[test]
    fn slow_beta_is_not_dominating() {
        let alpha = StepSchedule::Class1 { a: 20.0 };
        let beta = StepSchedule::Class2 { a: 1.0 };
        let th = ParamThresholds::new(1.0, 1.0, 4.0, 0.4).unwrap();
        let report = validate_params(&th, &alpha, &beta, &mc(), UpdateMode::Asynchronous);
        assert!(report.violations().any(|c| c.name == "beta_dominates_alpha"));
    }

    #[test]
    fn synchronous_mode_frees_class2_scale() {
        // faster time-scale beta = 1/n against class-2 alpha with A below A_*
        let alpha = StepSchedule::Class2 { a: 2.0 };
        let beta = StepSchedule::LogPower { scale: 1.0, exponent: 0.0 };
        let th = ParamThresholds::new(1.0, 1.0, 8.0, 0.4).unwrap();
        let sync = validate_params(&th, &alpha, &beta, &AsyncScheduler::Synchronous, UpdateMode::Synchronous);
        assert!(sync.passed, "{sync:?}");
        let asynchronous = validate_params(&th, &alpha, &beta, &mc(), UpdateMode::Asynchronous);
        assert_eq!(asynchronous.violations().map(|c| c.name).collect::<Vec<_>>(), vec!["class2_a"]);
        let mismatched = validate_params(&th, &alpha, &beta, &mc(), UpdateMode::Synchronous);
        assert!(mismatched.violations().any(|c| c.name == "update_mode"));
    }

    fn history(s: &AsyncScheduler, dim: usize, steps: u64, every: u64) -> Vec<UpdateCounters> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = s.start(dim).unwrap();
        let mut counters = UpdateCounters::new(dim);
        let mut set = Vec::new();
        let mut out = Vec::new();
        for k in 1..=steps {
            s.advance(&mut state, &mut rng, &mut set);
            counters.record(&set);
            if k % every == 0 {
                out.push(counters.clone());
            }
        }
        out
    }

    #[test]
    fn round_robin_ratios_are_exact() {
        let report = asynchrony_diagnostics(&history(&AsyncScheduler::RoundRobin, 3, 300, 30), DEFAULT_GAMMA).unwrap();
        assert_eq!(report.terminal_ratios, vec![1.0 / 3.0; 3]);
        assert_eq!(report.snapshots.len(), 10);
        assert!(report.snapshots.iter().all(|s| s.drift.iter().all(|&d| d == 0.0)));
    }

    #[test]
    fn synchronous_ratios_are_one() {
        let report = asynchrony_diagnostics(&history(&AsyncScheduler::Synchronous, 4, 50, 10), DEFAULT_GAMMA).unwrap();
        assert_eq!(report.min_ratio, 1.0);
    }

    #[test]
    fn chain_ratios_stay_away_from_zero() {
        let report = asynchrony_diagnostics(&history(&mc(), 6, 1_000_000, 100_000), DEFAULT_GAMMA).unwrap();
        assert!(report.min_ratio > 0.15);
        for s in &report.snapshots {
            assert!(s.ratios.iter().all(|&r| r > 0.1));
        }
    }

    #[test]
    fn empty_history_is_an_input_error() {
        assert!(matches!(asynchrony_diagnostics(&[], 0.49), Err(Error::Input(_))));
        assert!(asynchrony_diagnostics(&[UpdateCounters::new(2)], 0.49).is_err());
    }
}
