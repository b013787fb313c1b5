//! Experiment runners behind the command-line subcommands. Each runner
//! returns a serializable report; the `write_*` helpers persist reports
//! and traces under one directory per configuration.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ResolvedExperiment, SchedulerSpec};
use crate::error::{Error, Result};
use crate::learning::{convergence_detector, greedy_policy, run, ConvergenceReport, DivergenceRecord, RunTrace};
use crate::schedules::{validate_params, StepSchedule, UpdateMode, ValidationReport};
use crate::smdp::{classify_communication, sup_distance, CommunicationClass, DeterministicPolicy, QTable, SmdpModel};
use crate::solvers::{
    classical_rvi_traced, decomposition_gap, default_rvi_alpha, gain_oracle, integrate_ode, AoeSolution, MeanField,
    ShiftedOperator,
};

/// Slack allowed when checking that a distance does not increase.
pub const NONINCREASING_SLACK: f64 = 1e-9;

/// Runs `job` on a pool of `jobs` threads, or on the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(job()),
        Some(0) => Err(Error::Parameter("--jobs must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    use std::io::Write;
    out.write_all(b"\n")?;
    Ok(())
}

/// `<root>/<model>-<hash prefix>`, created if needed.
pub fn experiment_dir(root: &Path, exp: &ResolvedExperiment) -> Result<PathBuf> {
    let dir = root.join(format!("{}-{}", exp.model_name, exp.short_hash()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelCheckReport {
    pub num_states: usize,
    pub num_actions: usize,
    pub t_min: f64,
    /// An `ε > 0` with `P(τ ≤ ε) < 1` for every pair, and the largest such
    /// mass.
    pub holding_epsilon: f64,
    pub max_mass_at_epsilon: f64,
    pub finite_second_moments: bool,
    pub communication: CommunicationClass,
    pub passed: bool,
    pub problems: Vec<String>,
}

pub fn model_check(model: &SmdpModel) -> ModelCheckReport {
    let mut problems = Vec::new();
    let eps = model.holding_epsilon();
    let mass = model.max_mass_at_or_below(eps);
    if !(eps > 0.0 && mass < 1.0) {
        problems.push(format!("some pair has zero holding time almost surely (eps = {eps}, mass = {mass})"));
    }
    let finite_second_moments = (0..model.num_pairs())
        .all(|i| model.reward_second_moment(i).is_finite() && model.holding_second_moment(i).is_finite());
    if !finite_second_moments {
        problems.push("some reward or holding time lacks a finite second moment".into());
    }
    let communication = classify_communication(model);
    if !communication.is_weakly_communicating() {
        problems.push("not weakly communicating".into());
    }
    ModelCheckReport {
        num_states: model.num_states(),
        num_actions: model.num_actions(),
        t_min: model.t_min(),
        holding_epsilon: eps,
        max_mass_at_epsilon: mass,
        finite_second_moments,
        communication,
        passed: problems.is_empty(),
        problems,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RviOutcome {
    pub model: String,
    pub config_hash: String,
    pub oracle_rstar: Option<f64>,
    pub solution: AoeSolution,
    pub greedy_policy: DeterministicPolicy,
    /// Whether the greedy policy attains `r*`; `None` without an oracle.
    pub greedy_optimal: Option<bool>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

/// Classical RVI from the configured `q0` (zeros by default).
pub fn solve_rvi(exp: &ResolvedExperiment) -> Result<RviOutcome> {
    let model = &exp.model;
    let q0 = match &exp.run.q0 {
        Some(q) => QTable::from_vec(model.num_actions(), q.clone())?,
        None => QTable::for_model(model),
    };
    let alpha_bar = exp.rvi.alpha_bar.unwrap_or_else(|| default_rvi_alpha(model));
    let run = classical_rvi_traced(model, &exp.f, &q0, alpha_bar, exp.rvi.max_iters, exp.rvi.tol)?;
    let oracle = gain_oracle(model).ok();
    let greedy = greedy_policy(&run.solution.q);
    Ok(RviOutcome {
        model: exp.model_name.clone(),
        config_hash: exp.hash.clone(),
        oracle_rstar: oracle.as_ref().map(|o| o.rstar),
        greedy_optimal: oracle.as_ref().map(|o| o.is_optimal(&greedy)),
        greedy_policy: greedy,
        solution: run.solution,
        residuals: run.residuals,
    })
}

/// Writes `rvi-solution.json` and `rvi-residuals.csv`.
pub fn write_rvi(dir: &Path, outcome: &RviOutcome) -> Result<()> {
    write_json(&dir.join("rvi-solution.json"), outcome)?;
    let mut out = csv::Writer::from_path(dir.join("rvi-residuals.csv"))?;
    out.write_record(["iteration", "residual"])?;
    for (k, r) in outcome.residuals.iter().enumerate() {
        out.write_record([k.to_string(), r.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct LearnRunSummary {
    pub seed: u64,
    pub trace_file: String,
    pub final_f_q: f64,
    /// `|f(Q_n) − r*|` when an oracle value exists.
    pub f_error: Option<f64>,
    pub final_residual: f64,
    pub final_t_err_max: f64,
    /// `None` when the trace holds too few snapshots for the detector.
    pub convergence: Option<ConvergenceReport>,
    pub greedy_policy: DeterministicPolicy,
    pub greedy_optimal: Option<bool>,
    pub divergence: Option<DivergenceRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LearnOutcome {
    pub model: String,
    pub config_hash: String,
    pub rstar: Option<f64>,
    pub validation: ValidationReport,
    pub overridden: bool,
    pub runs: Vec<LearnRunSummary>,
    #[serde(skip)]
    pub traces: Vec<RunTrace>,
}

/// Checks the parameter conditions once for the whole experiment. Fails
/// with the list of violated checks unless the config overrides them.
pub fn learning_gate(exp: &ResolvedExperiment) -> Result<ValidationReport> {
    let learner = &exp.run.learner;
    let report = validate_params(
        &exp.run.thresholds,
        &learner.alpha,
        &learner.beta,
        &learner.scheduler,
        UpdateMode::of(&learner.scheduler),
    );
    if report.passed || exp.run.override_validation {
        Ok(report)
    } else {
        report.into_result()
    }
}

/// Runs every seed, in parallel across seeds.
pub fn learn(exp: &ResolvedExperiment) -> Result<LearnOutcome> {
    let validation = learning_gate(exp)?;
    let oracle = gain_oracle(&exp.model).ok();
    let rstar = oracle.as_ref().map(|o| o.rstar);
    let traces: Vec<RunTrace> =
        exp.seeds.par_iter().map(|&seed| run(&exp.model, &exp.f, &exp.run_config(seed))).collect::<Result<_>>()?;
    let runs = traces
        .iter()
        .map(|trace| {
            let last = trace.checkpoints.last().expect("traces start with a checkpoint");
            let det = &exp.detector;
            let greedy = greedy_policy(&trace.final_q);
            LearnRunSummary {
                seed: trace.seed,
                trace_file: trace_file_name(trace.seed),
                final_f_q: last.f_q,
                f_error: rstar.map(|r| (last.f_q - r).abs()),
                final_residual: last.residual_inf,
                final_t_err_max: last.t_err_max,
                convergence: convergence_detector(trace, det.window_fraction, det.tol_point, det.tol_set).ok(),
                greedy_optimal: oracle.as_ref().map(|o| o.is_optimal(&greedy)),
                greedy_policy: greedy,
                divergence: trace.divergence.clone(),
            }
        })
        .collect();
    Ok(LearnOutcome {
        model: exp.model_name.clone(),
        config_hash: exp.hash.clone(),
        rstar,
        overridden: !validation.passed,
        validation,
        runs,
        traces,
    })
}

pub fn trace_file_name(seed: u64) -> String {
    format!("learn-seed{seed}.csv")
}

/// Writes one CSV trace per seed and `learn-summary.json`.
pub fn write_learn(dir: &Path, outcome: &LearnOutcome) -> Result<()> {
    outcome
        .traces
        .par_iter()
        .map(|trace| trace.write_csv(BufWriter::new(File::create(dir.join(trace_file_name(trace.seed)))?)))
        .collect::<Result<Vec<_>>>()?;
    write_json(&dir.join("learn-summary.json"), outcome)
}

#[derive(Clone, Debug, Serialize)]
pub struct OdeCheck {
    pub passed: bool,
    /// Worst value of the checked quantity over all starts.
    pub worst: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OdeCheckReport {
    pub model: String,
    pub rstar: f64,
    /// `‖y(t) − q̄‖∞` along `h′` flows never grows (worst growth step).
    pub distance_nonincreasing: OdeCheck,
    /// `max_t ‖x(t) − y(t) − z(t)·1‖∞`.
    pub decomposition: OdeCheck,
    /// `‖x(T)‖∞` along `h∞` flows.
    pub origin_stability: OdeCheck,
    pub passed: bool,
}

fn random_starts(count: usize, dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..dim).map(|_| rng.random_range(-scale..=scale)).collect()).collect()
}

/// The ODE property battery on the configured model and `f`, with
/// `ᾱ = t_min`. `q̄` is the classical RVI solution and `r*` its `f`-value.
pub fn ode_check(exp: &ResolvedExperiment) -> Result<OdeCheckReport> {
    let model = &exp.model;
    let spec = &exp.ode;
    let op = ShiftedOperator::at_t_min(model)?;
    let alpha_bar = exp.rvi.alpha_bar.unwrap_or_else(|| default_rvi_alpha(model));
    let rvi =
        classical_rvi_traced(model, &exp.f, &QTable::for_model(model), alpha_bar, exp.rvi.max_iters, exp.rvi.tol)?;
    let qbar = rvi.solution.q.to_vec();
    let rstar = rvi.solution.rstar;
    let d = model.num_pairs();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let starts = random_starts(spec.starts, d, spec.start_scale, &mut rng);
    let infinity_starts = random_starts(spec.infinity_starts, d, spec.start_scale, &mut rng);

    let growth: Vec<f64> = starts
        .par_iter()
        .map(|x0| {
            let traj = integrate_ode(MeanField::HPrime { op: &op, rstar }, x0, spec.t_end, spec.dt)?;
            let dist: Vec<f64> = traj.states.iter().map(|y| sup_distance(y, &qbar)).collect();
            Ok(dist.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max))
        })
        .collect::<Result<_>>()?;
    let worst_growth = growth.into_iter().fold(f64::NEG_INFINITY, f64::max);

    let gaps: Vec<f64> = starts
        .par_iter()
        .map(|x0| decomposition_gap(&op, &exp.f, rstar, x0, spec.t_end, spec.dt))
        .collect::<Result<_>>()?;
    let worst_gap = gaps.into_iter().fold(0.0, f64::max);

    let finals: Vec<f64> = infinity_starts
        .par_iter()
        .map(|x0| {
            let traj = integrate_ode(MeanField::HInfinity { op: &op, f: &exp.f }, x0, spec.infinity_t_end, spec.dt)?;
            Ok(traj.last().iter().fold(0.0, |m: f64, v| m.max(v.abs())))
        })
        .collect::<Result<_>>()?;
    let worst_final = finals.into_iter().fold(0.0, f64::max);

    let distance_nonincreasing =
        OdeCheck { passed: worst_growth <= NONINCREASING_SLACK, worst: worst_growth, tolerance: NONINCREASING_SLACK };
    let decomposition =
        OdeCheck { passed: worst_gap <= spec.decomposition_tol, worst: worst_gap, tolerance: spec.decomposition_tol };
    let origin_stability =
        OdeCheck { passed: worst_final <= spec.origin_tol, worst: worst_final, tolerance: spec.origin_tol };
    let passed = distance_nonincreasing.passed && decomposition.passed && origin_stability.passed;
    Ok(OdeCheckReport {
        model: exp.model_name.clone(),
        rstar,
        distance_nonincreasing,
        decomposition,
        origin_stability,
        passed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRun {
    pub seed: u64,
    pub trace_file: String,
    pub final_residual: f64,
    pub f_error: Option<f64>,
    pub verdict: Option<crate::learning::Verdict>,
    pub diverged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepCell {
    #[serde(rename = "A")]
    pub a: f64,
    pub sigma: f64,
    pub scheduler: SchedulerSpec,
    pub validation: ValidationReport,
    /// Empty when validation failed and the config does not override it.
    pub runs: Vec<SweepRun>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepOutcome {
    pub model: String,
    pub config_hash: String,
    pub rstar: Option<f64>,
    pub cells: Vec<SweepCell>,
}

fn with_scale(alpha: &StepSchedule, a: f64) -> StepSchedule {
    match alpha {
        StepSchedule::Class1 { .. } => StepSchedule::Class1 { a },
        _ => StepSchedule::Class2 { a },
    }
}

/// Runs the `(A, ς, scheduler) × seeds` grid; every (cell, seed) is an
/// independent job and writes its own trace under `dir` when given.
pub fn sweep(exp: &ResolvedExperiment, dir: Option<&Path>) -> Result<SweepOutcome> {
    let spec = exp.sweep.as_ref().ok_or_else(|| Error::Input("config has no sweep section".into()))?;
    let rstar = gain_oracle(&exp.model).ok().map(|o| o.rstar);
    let schedulers =
        if spec.schedulers.is_empty() { vec![None] } else { spec.schedulers.iter().cloned().map(Some).collect() };
    let mut cells = Vec::new();
    for &a in &spec.a {
        for &sigma in &spec.sigma {
            for sched in &schedulers {
                let mut config = exp.run.clone();
                config.learner.alpha = with_scale(&exp.run.learner.alpha, a);
                config.learner.beta =
                    StepSchedule::ScaledCopy { base: Box::new(config.learner.alpha.clone()), factor: sigma };
                config.thresholds.sigma = sigma;
                if let Some(s) = sched {
                    config.learner.scheduler = s.build(exp.model.num_pairs())?;
                }
                let scheduler = &config.learner.scheduler;
                let validation = validate_params(
                    &config.thresholds,
                    &config.learner.alpha,
                    &config.learner.beta,
                    scheduler,
                    UpdateMode::of(scheduler),
                );
                let label = sched.clone().unwrap_or_else(|| scheduler_spec(scheduler));
                cells.push((a, sigma, label, validation, config));
            }
        }
    }
    let jobs: Vec<(usize, u64)> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.3.passed || exp.run.override_validation)
        .flat_map(|(k, _)| exp.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let results: Vec<(usize, SweepRun)> = jobs
        .par_iter()
        .map(|&(k, seed)| {
            let mut config = cells[k].4.clone();
            config.seed = seed;
            config.override_validation = true;
            let trace = run(&exp.model, &exp.f, &config)?;
            let trace_file = format!("sweep-cell{k}-seed{seed}.csv");
            if let Some(dir) = dir {
                trace.write_csv(BufWriter::new(File::create(dir.join(&trace_file))?))?;
            }
            let last = trace.checkpoints.last().expect("traces start with a checkpoint");
            let det = &exp.detector;
            Ok((
                k,
                SweepRun {
                    seed,
                    trace_file,
                    final_residual: last.residual_inf,
                    f_error: rstar.map(|r| (last.f_q - r).abs()),
                    verdict: convergence_detector(&trace, det.window_fraction, det.tol_point, det.tol_set)
                        .ok()
                        .map(|r| r.verdict),
                    diverged: trace.divergence.is_some(),
                },
            ))
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<SweepCell> = cells
        .into_iter()
        .map(|(a, sigma, scheduler, validation, _)| SweepCell { a, sigma, scheduler, validation, runs: Vec::new() })
        .collect();
    for (k, r) in results {
        out[k].runs.push(r);
    }
    Ok(SweepOutcome { model: exp.model_name.clone(), config_hash: exp.hash.clone(), rstar, cells: out })
}

fn scheduler_spec(s: &crate::schedules::AsyncScheduler) -> SchedulerSpec {
    use crate::schedules::AsyncScheduler as S;
    match s {
        S::Synchronous => SchedulerSpec::Synchronous,
        S::UniformRandom { k } => SchedulerSpec::UniformRandom { k: *k },
        S::RoundRobin => SchedulerSpec::RoundRobin,
        S::MarkovChain { matrix } => SchedulerSpec::MarkovChain { matrix: matrix.clone() },
    }
}

/// Writes `sweep.json` and a flat `sweep.csv` with one row per run.
pub fn write_sweep(dir: &Path, outcome: &SweepOutcome) -> Result<()> {
    write_json(&dir.join("sweep.json"), outcome)?;
    let mut out = csv::Writer::from_path(dir.join("sweep.csv"))?;
    out.write_record(["cell", "A", "sigma", "validated", "seed", "final_residual", "f_error", "verdict", "diverged"])?;
    for (k, cell) in outcome.cells.iter().enumerate() {
        for r in &cell.runs {
            out.write_record([
                k.to_string(),
                cell.a.to_string(),
                cell.sigma.to_string(),
                cell.validation.passed.to_string(),
                r.seed.to_string(),
                r.final_residual.to_string(),
                r.f_error.map(|e| e.to_string()).unwrap_or_default(),
                r.verdict
                    .map(|v| serde_json::to_string(&v).expect("verdict").trim_matches('"').to_string())
                    .unwrap_or_default(),
                r.diverged.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;
    use crate::harness::zoo;

    fn experiment(extra: &str) -> ResolvedExperiment {
        experiment_with(20000, 1000, "[1, 2]", extra)
    }

    fn experiment_with(iters: u64, snapshot_every: u64, seeds: &str, extra: &str) -> ResolvedExperiment {
        let text = format!(
            r#"{{"model": {{"zoo": "wc3"}}, "alpha": {{"kind": "class2", "A": 4.0}}, "sigma": 4.0,
                "iters": {iters}, "snapshot_every": {snapshot_every}, "seeds": {seeds} {extra}}}"#
        );
        ExperimentConfig::from_json_str(&text).unwrap().resolve(Path::new(".")).unwrap()
    }

    #[test]
    fn model_check_flags_two_loops() {
        let report = model_check(&zoo::two_loops());
        assert!(!report.passed);
        assert_eq!(report.problems, vec!["not weakly communicating".to_string()]);
        let report = model_check(&zoo::smdp_exp());
        assert!(report.passed, "{:?}", report.problems);
        assert_eq!(report.t_min, 0.5);
    }

    #[test]
    fn rvi_outcome_matches_oracle() {
        let outcome = solve_rvi(&experiment("")).unwrap();
        assert!((outcome.solution.rstar - 1.0).abs() < 1e-8);
        assert_eq!(outcome.oracle_rstar, Some(1.0));
        assert_eq!(outcome.greedy_optimal, Some(true));
        assert_eq!(outcome.residuals.len(), outcome.solution.iterations + 1);
    }

    #[test]
    fn learn_gate_blocks_bad_parameters() {
        let text = r#"{"model": {"zoo": "wc3"}, "alpha": {"kind": "class1", "A": 5.0}, "sigma": 4.0, "iters": 100}"#;
        let exp = ExperimentConfig::from_json_str(text).unwrap().resolve(Path::new(".")).unwrap();
        match learn(&exp) {
            Err(Error::Validation(list)) => assert!(list.iter().any(|v| v.contains("class1_half_a")), "{list:?}"),
            other => panic!("expected rejection, got {other:?}"),
        }
        let overridden = r#"{"model": {"zoo": "wc3"}, "alpha": {"kind": "class1", "A": 5.0}, "sigma": 4.0,
            "iters": 100, "override_validation": true, "seeds": [3]}"#;
        let exp = ExperimentConfig::from_json_str(overridden).unwrap().resolve(Path::new(".")).unwrap();
        let outcome = learn(&exp).unwrap();
        assert!(outcome.overridden);
        assert_eq!(outcome.runs.len(), 1);
    }

    #[test]
    fn learn_writes_identical_files_twice() {
        let exp = experiment("");
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for dir in &dirs {
            let outcome = learn(&exp).unwrap();
            write_learn(dir.path(), &outcome).unwrap();
        }
        for name in [trace_file_name(1), trace_file_name(2), "learn-summary.json".into()] {
            let a = std::fs::read(dirs[0].path().join(&name)).unwrap();
            let b = std::fs::read(dirs[1].path().join(&name)).unwrap();
            assert!(!a.is_empty());
            assert_eq!(a, b, "{name}");
        }
    }

    #[test]
    fn ode_battery_passes_on_wc3() {
        let report = ode_check(&experiment(r#", "ode": {"starts": 4, "infinity_starts": 4}"#)).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn sweep_skips_rejected_cells() {
        let exp = experiment_with(
            2000,
            100,
            "[1]",
            r#", "sweep": {"A": [1.0, 4.0], "sigma": [4.0], "schedulers": [{"kind": "round_robin"}]}"#,
        );
        let dir = tempfile::tempdir().unwrap();
        let outcome = sweep(&exp, Some(dir.path())).unwrap();
        assert_eq!(outcome.cells.len(), 2);
        assert!(!outcome.cells[0].validation.passed && outcome.cells[0].runs.is_empty());
        assert!(outcome.cells[1].validation.passed && outcome.cells[1].runs.len() == 1);
        write_sweep(dir.path(), &outcome).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(dir.path().join("sweep-cell1-seed1.csv").exists());
    }

    #[test]
    fn jobs_bound_is_checked() {
        assert!(with_jobs(Some(0), || ()).is_err());
        assert_eq!(with_jobs(Some(2), rayon::current_num_threads).unwrap(), 2);
    }
}
