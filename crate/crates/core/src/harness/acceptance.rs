//! The acceptance battery. Each criterion is a self-contained function
//! returning a [`CriterionOutcome`] with the measured quantities, so the
//! same code backs the `accept` subcommand and the `acceptance` test
//! target.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::{learn, ode_check, write_learn};
use super::zoo::{self, zoo_entry};
use crate::error::{Error, Result};
use crate::learning::{compute_noise_decomposition, convergence_detector, Learner, LearnerConfig, Verdict};
use crate::rate::RateFunction;
use crate::schedules::{
    validate_params, AsyncScheduler, FloorSchedule, ParamThresholds, StepSchedule, UpdateMode, DEFAULT_GAMMA,
};
use crate::smdp::{sup_distance, sup_norm, QTable, SmdpModel};
use crate::solvers::{classical_rvi, default_rvi_alpha, gain_oracle, rvi_step, ShiftedOperator};

/// Seeds used by every stochastic criterion.
pub const MASTER_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const CRITERION_IDS: [u8; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

#[derive(Clone, Debug, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub elapsed_secs: f64,
    pub details: Vec<String>,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} criterion {:>2} {} ({:.2} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed_secs,
            self.details.join("; ")
        )
    }
}

#[derive(Default)]
struct Checks {
    failed: bool,
    details: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        let detail = detail.into();
        if ok {
            self.details.push(detail);
        } else {
            self.failed = true;
            self.details.push(format!("FAILED {detail}"));
        }
    }

    fn timed<T>(&mut self, label: &str, limit: Duration, job: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = job()?;
        let elapsed = start.elapsed();
        self.check(
            elapsed <= limit,
            format!("{label} took {:.3} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs_f64()),
        );
        Ok(out)
    }
}

pub fn criterion_title(id: u8) -> &'static str {
    match id {
        1 => "oracle agreement",
        2 => "zero-reward structure",
        3 => "operator properties",
        4 => "scaling limit",
        5 => "ODE battery",
        6 => "learning converges to the solution set",
        7 => "learning converges to a point",
        8 => "noise decomposition",
        9 => "degeneration to classical RVI",
        10 => "reproducibility",
        _ => "unknown",
    }
}

/// Runs one criterion; internal errors count as failures.
pub fn run_criterion(id: u8) -> CriterionOutcome {
    let start = Instant::now();
    let mut checks = Checks::default();
    let result = match id {
        1 => oracle_agreement(&mut checks),
        2 => zero_reward(&mut checks),
        3 => operator_properties(&mut checks),
        4 => scaling_limit(&mut checks),
        5 => ode_battery(&mut checks),
        6 => set_convergence(&mut checks),
        7 => point_convergence(&mut checks),
        8 => noise_decomposition(&mut checks),
        9 => degeneration(&mut checks),
        10 => reproducibility(&mut checks),
        _ => Err(Error::Input(format!("no criterion {id}"))),
    };
    if let Err(e) = result {
        checks.check(false, format!("error: {e}"));
    }
    CriterionOutcome {
        id,
        title: criterion_title(id),
        passed: !checks.failed,
        elapsed_secs: start.elapsed().as_secs_f64(),
        details: checks.details,
    }
}

pub fn run_acceptance(ids: &[u8]) -> Vec<CriterionOutcome> {
    ids.iter().map(|&id| run_criterion(id)).collect()
}

fn model(name: &str) -> Result<SmdpModel> {
    zoo_entry(name).map(|e| e.model).ok_or_else(|| Error::Input(format!("no zoo model {name}")))
}

fn uniform_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-scale..=scale)).collect()
}

fn oracle_agreement(checks: &mut Checks) -> Result<()> {
    for name in ["unit1", "cycle2", "wc3", "smdp-exp"] {
        let m = model(name)?;
        let f = RateFunction::mean(m.num_pairs())?;
        let rstar = gain_oracle(&m)?.rstar;
        let sol = checks.timed(&format!("{name} solve"), Duration::from_secs(1), || {
            classical_rvi(&m, &f, &QTable::for_model(&m), default_rvi_alpha(&m), 1_000_000, 1e-11)
        })?;
        let op = ShiftedOperator::at_t_min(&m)?;
        let residual = op.aoe_residual(&sol.q, sol.rstar)?;
        let gap = (sol.rstar - rstar).abs();
        checks.check(gap <= 1e-8, format!("{name}: |f(q) - r*| = {gap:.2e} (r* = {rstar})"));
        checks.check(residual <= 1e-8, format!("{name}: AOE residual {residual:.2e}"));
    }
    Ok(())
}

fn zero_reward(checks: &mut Checks) -> Result<()> {
    let m = model("wc3-zero")?;
    let f = RateFunction::mean(m.num_pairs())?;
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEEDS[0]);
    for start in 0..5 {
        let q0 = QTable::from_vec(m.num_actions(), uniform_vec(&mut rng, m.num_pairs(), 5.0))?;
        let sol = classical_rvi(&m, &f, &q0, default_rvi_alpha(&m), 1_000_000, 1e-12)?;
        let max = sol.q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = sol.q.iter().copied().fold(f64::INFINITY, f64::min);
        checks.check(max - min <= 1e-8, format!("start {start}: span {:.2e}", max - min));
        checks.check(sol.rstar.abs() <= 1e-8, format!("start {start}: f(q) = {:.2e}", sol.rstar));
    }
    Ok(())
}

fn operator_properties(checks: &mut Checks) -> Result<()> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEEDS[0]);
    for name in ["wc3", "smdp-exp"] {
        let m = model(name)?;
        let op = ShiftedOperator::at_t_min(&m)?;
        let d = m.num_pairs();
        let (mut worst_expansion, mut worst_shift) = (f64::NEG_INFINITY, 0.0f64);
        for _ in 0..1000 {
            let q = uniform_vec(&mut rng, d, 10.0);
            let p = uniform_vec(&mut rng, d, 10.0);
            let c = rng.random_range(-10.0..=10.0);
            let (tq, tp) = (op.apply(&q)?, op.apply(&p)?);
            worst_expansion = worst_expansion.max(sup_distance(&tq, &tp) - sup_distance(&q, &p));
            let shifted: Vec<f64> = q.iter().map(|v| v + c).collect();
            let expected: Vec<f64> = tq.iter().map(|v| v + c).collect();
            worst_shift = worst_shift.max(sup_distance(&op.apply(&shifted)?, &expected));
        }
        checks.check(
            worst_expansion <= 1e-12,
            format!("{name}: max ‖Tq − Tp‖ − ‖q − p‖ = {worst_expansion:.2e} over 1000 pairs"),
        );
        checks.check(worst_shift <= 1e-12, format!("{name}: max ‖T(q + c) − Tq − c‖ = {worst_shift:.2e}"));
    }
    let elapsed = start.elapsed().as_secs_f64();
    checks.check(elapsed < 1.0, format!("took {elapsed:.3} s (limit 1 s)"));
    Ok(())
}

fn scaling_limit(checks: &mut Checks) -> Result<()> {
    let start = Instant::now();
    let m = model("wc3")?;
    let d = m.num_pairs();
    let op = ShiftedOperator::at_t_min(&m)?;
    let families = [
        ("affine", RateFunction::affine(2.0, vec![0.1, 0.3, 0.1, 0.2, 0.2, 0.1])?),
        ("max", RateFunction::max_over(-1.0, 1.0, vec![0, 2, 4], d)?),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEEDS[0]);
    let mut grid: Vec<Vec<f64>> = (0..256).map(|_| uniform_vec(&mut rng, d, 1.0)).collect();
    grid.push(vec![0.0; d]);
    for (label, f) in &families {
        let mut errors = Vec::new();
        for k in 0..=20 {
            let c = f64::powi(2.0, k);
            let mut worst = 0.0f64;
            for q in &grid {
                let scaled: Vec<f64> = q.iter().map(|v| c * v).collect();
                let hc: Vec<f64> = op.h(f, &scaled)?.iter().map(|v| v / c).collect();
                worst = worst.max(sup_distance(&hc, &op.h_infinity(f, q)?));
            }
            errors.push(worst);
        }
        let last = *errors.last().expect("grid of scales");
        let monotone = errors.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        checks.check(last <= 1e-3, format!("{label}: error at c = 2^20 is {last:.2e}"));
        checks.check(monotone, format!("{label}: error nonincreasing over c = 2^0..2^20 (from {:.2e})", errors[0]));
    }
    let elapsed = start.elapsed().as_secs_f64();
    checks.check(elapsed < 5.0, format!("took {elapsed:.3} s (limit 5 s)"));
    Ok(())
}

fn experiment(
    model: &str,
    alpha: &StepSchedule,
    sigma: f64,
    iters: u64,
    snapshot_every: u64,
) -> Result<ExperimentConfig> {
    let text = serde_json::json!({
        "model": {"zoo": model},
        "rate_function": "mean",
        "alpha": alpha,
        "sigma": sigma,
        "scheduler": {"kind": "random_walk", "advance": 0.5},
        "iters": iters,
        "snapshot_every": snapshot_every,
        "seeds": MASTER_SEEDS,
    });
    ExperimentConfig::from_json_str(&text.to_string())
}

fn ode_battery(checks: &mut Checks) -> Result<()> {
    let start = Instant::now();
    let name = "wc3";
    let exp = experiment(name, &StepSchedule::Class2 { a: 1.0 }, 1.0, 1, 1)?.resolve(Path::new("."))?;
    let report = ode_check(&exp)?;
    let r = &report.distance_nonincreasing;
    checks.check(r.passed, format!("{name}: largest step increase of ‖y − q̄‖ over 20 h′ flows {:.2e}", r.worst));
    let r = &report.decomposition;
    checks.check(r.passed, format!("{name}: max ‖x − y − z·1‖ on [0, 20] is {:.2e}", r.worst));
    let r = &report.origin_stability;
    checks.check(r.passed, format!("{name}: max ‖x(40)‖ over 50 h∞ flows is {:.2e}", r.worst));
    let elapsed = start.elapsed().as_secs_f64();
    checks.check(elapsed < 30.0, format!("took {elapsed:.2} s (limit 30 s)"));
    Ok(())
}

/// `A = ς = A_* + 1` for `f` = mean, whose Lipschitz bound is 1.
fn class2_setting(m: &SmdpModel) -> Result<(StepSchedule, f64)> {
    let a_star = ParamThresholds::new(m.t_min(), 1.0, 1.0, DEFAULT_GAMMA)?.a_star();
    Ok((StepSchedule::Class2 { a: a_star + 1.0 }, a_star + 1.0))
}

fn set_convergence(checks: &mut Checks) -> Result<()> {
    for name in ["wc3", "smdp-exp"] {
        let m = model(name)?;
        let (alpha, sigma) = class2_setting(&m)?;
        let exp = experiment(name, &alpha, sigma, 500_000, 5_000)?.resolve(Path::new("."))?;
        let outcome = checks.timed(&format!("{name}: five runs"), Duration::from_secs(60), || learn(&exp))?;
        let rstar = outcome.rstar.ok_or_else(|| Error::Input("no oracle value".into()))?;
        for trace in &outcome.traces {
            let last = trace.checkpoints.last().expect("nonempty trace");
            let window_start = (0.9 * last.n as f64).ceil() as u64;
            let max_residual =
                trace.checkpoints.iter().filter(|c| c.n >= window_start).map(|c| c.residual_inf).fold(0.0, f64::max);
            let f_error = (last.f_q - rstar).abs();
            checks.check(
                max_residual <= 0.1 && f_error <= 0.05 && trace.divergence.is_none(),
                format!("{name} seed {}: window residual {max_residual:.3}, |f(Q) − r*| {f_error:.3}", trace.seed),
            );
        }
    }
    Ok(())
}

fn point_convergence(checks: &mut Checks) -> Result<()> {
    let start = Instant::now();
    for name in ["wc3", "smdp-exp"] {
        let m = model(name)?;
        let (alpha, sigma) = class2_setting(&m)?;
        let exp = experiment(name, &alpha, sigma, 1_000_000, 10_000)?.resolve(Path::new("."))?;
        let outcome = learn(&exp)?;
        let mut points = 0;
        let mut seen = Vec::new();
        for trace in &outcome.traces {
            let report = convergence_detector(trace, 0.1, 0.1, 0.1)?;
            points += usize::from(report.verdict == Verdict::ConvergedToPoint);
            seen.push(format!(
                "seed {} {:?} (residual {:.3}, drift {:.3})",
                trace.seed, report.verdict, report.max_residual, report.max_pairwise
            ));
        }
        checks.check(points >= 4, format!("{name}: {points}/5 converged to a point [{}]", seen.join(", ")));

        let thresholds = exp.run.thresholds.clone();
        let beta = StepSchedule::PowerLaw { scale: 1.0, exponent: 0.75 };
        let scheduler = &exp.run.learner.scheduler;
        let report = validate_params(&thresholds, &alpha, &beta, scheduler, UpdateMode::of(scheduler));
        let failed: Vec<&str> = report.violations().map(|c| c.name).collect();
        checks.check(
            !report.passed && failed.contains(&"beta_decay"),
            format!("{name}: beta = n^-0.75 rejected by {failed:?}"),
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    checks.check(elapsed < 150.0, format!("took {elapsed:.1} s (limit 150 s)"));
    Ok(())
}

fn noise_decomposition(checks: &mut Checks) -> Result<()> {
    let start = Instant::now();
    let m = zoo::smdp_exp();
    let d = m.num_pairs();
    let f = RateFunction::mean(d)?;
    let (alpha, sigma) = class2_setting(&m)?;
    let config = |eta| LearnerConfig {
        beta: StepSchedule::ScaledCopy { base: Box::new(alpha.clone()), factor: sigma },
        alpha: alpha.clone(),
        eta,
        scheduler: AsyncScheduler::UniformRandom { k: 2 },
        gauss_seidel: false,
    };
    // The floor stays below t_min in the pinned run so that the
    // denominator is exactly t_sa.
    for (pinned, eta) in [(false, FloorSchedule::InverseLog), (true, FloorSchedule::Constant { value: 0.25 })] {
        let mut learner = Learner::new(&m, &f, config(eta), MASTER_SEEDS[0], None, None)?;
        let (mut worst, mut worst_eps) = (0.0f64, 0.0f64);
        for _ in 0..10_000 {
            if pinned {
                learner.set_holding_estimates(m.holdings().to_vec())?;
            }
            let state = learner.state();
            let (q, t) = (state.q.to_vec(), state.t.clone());
            let eta = learner.config().eta.value(state.n());
            let (set, samples) = learner.draw();
            let dec = compute_noise_decomposition(&m, &f, &q, &t, eta, &set, &samples)?;
            worst = worst.max(dec.reconstruction_error());
            worst_eps = worst_eps.max(sup_norm(&dec.eps));
            learner.apply(set, samples)?;
        }
        if pinned {
            checks.check(worst_eps == 0.0, format!("T pinned to t_sa: max |ε| = {worst_eps:.2e} over 10^4 steps"));
        } else {
            checks.check(worst <= 1e-12, format!("max |h + M + ε − increment| = {worst:.2e} over 10^4 steps"));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    checks.check(elapsed < 10.0, format!("took {elapsed:.3} s (limit 10 s)"));
    Ok(())
}

fn degeneration(checks: &mut Checks) -> Result<()> {
    let start = Instant::now();
    let alpha_bar = 0.5;
    for name in ["unit1", "cycle2", "wc3"] {
        let m = model(name)?;
        let f = RateFunction::mean(m.num_pairs())?;
        let config = LearnerConfig {
            alpha: StepSchedule::PowerLaw { scale: 1.0 / alpha_bar, exponent: 0.0 },
            beta: StepSchedule::Class1 { a: 1.0 },
            eta: FloorSchedule::InverseLog,
            scheduler: AsyncScheduler::Synchronous,
            gauss_seidel: false,
        };
        let mut learner = Learner::new(&m, &f, config, MASTER_SEEDS[0], None, Some(m.holdings().to_vec()))?;
        let mut q = vec![0.0; m.num_pairs()];
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            learner.step()?;
            q = rvi_step(&m, &f, &q, alpha_bar)?;
            worst = worst.max(sup_distance(&learner.state().q, &q));
        }
        checks.check(worst <= 1e-12, format!("{name}: max iterate gap {worst:.2e} over 1000 iterations"));
    }
    let elapsed = start.elapsed().as_secs_f64();
    checks.check(elapsed < 1.0, format!("took {elapsed:.3} s (limit 1 s)"));
    Ok(())
}

fn scratch_dir(tag: &str) -> PathBuf {
    let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    std::env::temp_dir().join(format!("smdp-rvi-accept-{}-{nanos}-{tag}", std::process::id()))
}

fn reproducibility(checks: &mut Checks) -> Result<()> {
    let start = Instant::now();
    let m = zoo::smdp_exp();
    let (alpha, sigma) = class2_setting(&m)?;
    let mut config = experiment("smdp-exp", &alpha, sigma, 200_000, 10_000)?;
    config.seeds = Some(vec![MASTER_SEEDS[0]]);
    let exp = config.resolve(Path::new("."))?;
    let dirs = [scratch_dir("a"), scratch_dir("b")];
    let result: Result<()> = (|| {
        for dir in &dirs {
            std::fs::create_dir_all(dir)?;
            write_learn(dir, &learn(&exp)?)?;
        }
        let mut names: Vec<_> =
            std::fs::read_dir(&dirs[0])?.map(|e| e.map(|e| e.file_name())).collect::<std::io::Result<_>>()?;
        names.sort();
        for name in names {
            let a = std::fs::read(dirs[0].join(&name))?;
            let b = std::fs::read(dirs[1].join(&name))?;
            checks.check(a == b, format!("{} identical ({} bytes)", name.to_string_lossy(), a.len()));
        }
        Ok(())
    })();
    for dir in &dirs {
        let _ = std::fs::remove_dir_all(dir);
    }
    result?;
    let elapsed = start.elapsed().as_secs_f64();
    checks.check(elapsed < 60.0, format!("took {elapsed:.2} s (limit 60 s)"));
    Ok(())
}
