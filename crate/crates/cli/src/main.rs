//! `smdp-rvi`: command-line driver for models, exact solvers, learning runs
//! and the acceptance battery.
//!
//! Exit status is 0 on success, 1 when an input, configuration or check is
//! rejected, and 2 on runtime failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use smdp_rvi::harness::{
    self, acceptance, experiment_dir, model_zoo, resolve_output_dir, ExperimentConfig, ModelSource, ResolvedExperiment,
    CRITERION_IDS,
};
use smdp_rvi::smdp::{CommunicationClass, NotWeaklyCommunicating};
use smdp_rvi::solvers::gain_oracle;
use smdp_rvi::{Error, SmdpModel};

#[derive(Parser, Debug)]
#[command(name = "smdp-rvi", version, about = "Average-reward SMDP solvers and RVI Q-learning experiments")]
struct Cli {
    /// Output root; defaults to the config's output_dir, then $SMDP_RVI_OUT,
    /// then ./smdp-rvi-out.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Replace the config's seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the number of learning iterations (RVI iteration cap for
    /// solve-rvi).
    #[arg(long, global = true)]
    iters: Option<u64>,
    /// Print nothing on success.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Worker threads for parallel runs; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check model assumptions and communication structure.
    ModelCheck { model: String },
    /// Optimal reward rate and optimal policies by policy enumeration.
    Oracle { model: String },
    /// Classical relative value iteration.
    SolveRvi { config: PathBuf },
    /// RVI Q-learning runs, one per seed.
    Learn { config: PathBuf },
    /// Property battery for the mean-field ODEs.
    OdeCheck { config: PathBuf },
    /// Learning runs over a grid of stepsize scales and schedulers.
    Sweep { config: PathBuf },
    /// Run the acceptance battery.
    Accept {
        /// Criteria to run (default: all).
        #[arg(long = "criterion", value_name = "ID")]
        criteria: Vec<u8>,
    },
    /// List the built-in models, optionally writing them as JSON files.
    Zoo {
        #[arg(long, value_name = "DIR")]
        export: Option<PathBuf>,
    },
}

/// A rejected input or failed check, reported with exit status 1.
struct Rejected(String);

enum Failure {
    Rejected(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            match e {
                Error::Validation(list) => Failure::Rejected(format!("validation failed:\n  {}", list.join("\n  "))),
                other => Failure::Rejected(other.to_string()),
            }
        } else {
            Failure::Runtime(e)
        }
    }
}

impl From<Rejected> for Failure {
    fn from(r: Rejected) -> Self {
        Failure::Rejected(r.0)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rejected(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

struct Output {
    quiet: bool,
    lines: Vec<String>,
}

impl Output {
    fn line(&mut self, text: impl Into<String>) {
        self.lines.push(text.into());
    }

    fn json<T: serde::Serialize>(&mut self, value: &T) -> Result<(), Failure> {
        self.line(serde_json::to_string_pretty(value).map_err(Error::from)?);
        Ok(())
    }

    fn flush(self) -> std::io::Result<()> {
        if self.quiet {
            return Ok(());
        }
        let mut out = std::io::stdout().lock();
        for line in self.lines {
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut out = Output { quiet: cli.quiet, lines: Vec::new() };
    let result = match &cli.command {
        Command::ModelCheck { model } => model_check(cli, &mut out, model),
        Command::Oracle { model } => oracle(cli, &mut out, model),
        Command::SolveRvi { config } => solve_rvi(cli, &mut out, config),
        Command::Learn { config } => learn(cli, &mut out, config),
        Command::OdeCheck { config } => ode_check(cli, &mut out, config),
        Command::Sweep { config } => sweep(cli, &mut out, config),
        Command::Accept { criteria } => accept(cli, &mut out, criteria),
        Command::Zoo { export } => zoo(cli, &mut out, export.as_deref()),
    };
    // Reports are printed even when a check fails; the status carries the
    // verdict.
    out.flush()?;
    result
}

fn load_model(arg: &str) -> Result<(String, SmdpModel), Failure> {
    Ok(ModelSource::from_arg(arg).load(Path::new("."))?)
}

fn load_experiment(cli: &Cli, path: &Path) -> Result<(ResolvedExperiment, PathBuf), Failure> {
    let mut config = ExperimentConfig::from_path(path)?.with_overrides(cli.iters, cli.seed);
    if let (Command::OdeCheck { .. }, Some(seed)) = (&cli.command, cli.seed) {
        config.ode.seed = seed;
    }
    if let (Command::SolveRvi { .. }, Some(iters)) = (&cli.command, cli.iters) {
        config.rvi.max_iters = iters as usize;
    }
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let exp = config.resolve(base)?;
    let root = resolve_output_dir(cli.out.as_deref(), exp.output_dir.as_deref());
    Ok((exp, root))
}

fn set(states: &[usize]) -> String {
    let items: Vec<String> = states.iter().map(usize::to_string).collect();
    format!("{{{}}}", items.join(", "))
}

fn model_check(cli: &Cli, out: &mut Output, arg: &str) -> Result<(), Failure> {
    let (name, model) = load_model(arg)?;
    let report = harness::model_check(&model);
    match cli.format {
        Format::Json => out.json(&report)?,
        Format::Csv => {
            out.line("property,value");
            out.line(format!("num_states,{}", report.num_states));
            out.line(format!("num_actions,{}", report.num_actions));
            out.line(format!("t_min,{}", report.t_min));
            out.line(format!("holding_epsilon,{}", report.holding_epsilon));
            out.line(format!("finite_second_moments,{}", report.finite_second_moments));
            out.line(format!("weakly_communicating,{}", report.communication.is_weakly_communicating()));
            out.line(format!("passed,{}", report.passed));
        }
        Format::Text => {
            out.line(format!("model {name}: {} states, {} actions", report.num_states, report.num_actions));
            out.line(format!("t_min = {}", report.t_min));
            out.line(format!(
                "holding times: P(tau <= {}) <= {} for every pair",
                report.holding_epsilon, report.max_mass_at_epsilon
            ));
            out.line(format!("finite second moments: {}", report.finite_second_moments));
            out.line(match &report.communication {
                CommunicationClass::WeaklyCommunicating { closed_class, transient } => {
                    format!("weakly communicating: closed class {}, transient {}", set(closed_class), set(transient))
                }
                CommunicationClass::NotWeaklyCommunicating(NotWeaklyCommunicating::MultipleClosedClasses {
                    classes,
                }) => {
                    let list: Vec<String> = classes.iter().map(|c| set(c)).collect();
                    format!("not weakly communicating: closed classes {}", list.join(", "))
                }
                CommunicationClass::NotWeaklyCommunicating(NotWeaklyCommunicating::TrappingSet { states, actions }) => {
                    let acts: Vec<String> = actions.iter().map(|(s, a)| format!("({s}, {a})")).collect();
                    format!(
                        "not weakly communicating: states {} are closed under actions {}",
                        set(states),
                        acts.join(" ")
                    )
                }
            });
        }
    }
    if report.passed {
        if cli.format == Format::Text {
            out.line("model check passed");
        }
        Ok(())
    } else {
        Err(Rejected(format!("model check failed: {}", report.problems.join("; "))).into())
    }
}

fn actions(policy: &smdp_rvi::DeterministicPolicy) -> String {
    let items: Vec<String> = policy.actions().iter().map(usize::to_string).collect();
    format!("[{}]", items.join(", "))
}

fn oracle(cli: &Cli, out: &mut Output, arg: &str) -> Result<(), Failure> {
    let (name, model) = load_model(arg)?;
    let report = gain_oracle(&model)?;
    match cli.format {
        Format::Json => out.json(&report)?,
        Format::Csv => {
            out.line("policy,min_gain,max_gain,optimal");
            for (k, p) in report.policies.iter().enumerate() {
                let policy: Vec<String> = p.policy.actions().iter().map(usize::to_string).collect();
                out.line(format!(
                    "{},{},{},{}",
                    policy.join(" "),
                    p.min_gain(),
                    p.max_gain(),
                    report.optimal.contains(&k)
                ));
            }
        }
        Format::Text => {
            out.line(format!("model {name}: {} deterministic policies", report.policies.len()));
            out.line(format!("rstar = {}", report.rstar));
            out.line("optimal policies:");
            for p in report.optimal_policies() {
                out.line(format!("  {}", actions(p)));
            }
        }
    }
    Ok(())
}

fn solve_rvi(cli: &Cli, out: &mut Output, path: &Path) -> Result<(), Failure> {
    let (exp, root) = load_experiment(cli, path)?;
    let outcome = harness::solve_rvi(&exp)?;
    let dir = experiment_dir(&root, &exp)?;
    harness::write_rvi(&dir, &outcome)?;
    let sol = &outcome.solution;
    match cli.format {
        Format::Json => out.json(&outcome)?,
        Format::Csv => {
            out.line("model,rstar,oracle_rstar,residual,iterations,alpha_bar");
            out.line(format!(
                "{},{},{},{},{},{}",
                outcome.model,
                sol.rstar,
                outcome.oracle_rstar.map(|r| r.to_string()).unwrap_or_default(),
                sol.residual,
                sol.iterations,
                sol.alpha_bar
            ));
        }
        Format::Text => {
            out.line(format!("model {}: f(q) = {} after {} iterations", outcome.model, sol.rstar, sol.iterations));
            if let Some(r) = outcome.oracle_rstar {
                out.line(format!("oracle rstar = {r}, gap {:.3e}", (sol.rstar - r).abs()));
            }
            out.line(format!("AOE residual {:.3e}", sol.residual));
            out.line(format!("greedy policy {}", actions(&outcome.greedy_policy)));
            out.line(format!("wrote {}", dir.display()));
        }
    }
    Ok(())
}

fn learn(cli: &Cli, out: &mut Output, path: &Path) -> Result<(), Failure> {
    let (exp, root) = load_experiment(cli, path)?;
    harness::learning_gate(&exp)?;
    let outcome = harness::with_jobs(cli.jobs, || harness::learn(&exp))??;
    let dir = experiment_dir(&root, &exp)?;
    harness::write_learn(&dir, &outcome)?;
    match cli.format {
        Format::Json => out.json(&outcome)?,
        Format::Csv => {
            out.line("seed,final_f_q,f_error,final_residual,t_err_max,verdict,trace");
            for r in &outcome.runs {
                out.line(format!(
                    "{},{},{},{},{},{},{}",
                    r.seed,
                    r.final_f_q,
                    r.f_error.map(|e| e.to_string()).unwrap_or_default(),
                    r.final_residual,
                    r.final_t_err_max,
                    r.convergence.as_ref().map(|c| format!("{:?}", c.verdict)).unwrap_or_default(),
                    dir.join(&r.trace_file).display()
                ));
            }
        }
        Format::Text => {
            if outcome.overridden {
                out.line("warning: parameter validation failed and was overridden:");
                for c in outcome.validation.violations() {
                    out.line(format!("  {}: {}", c.name, c.detail));
                }
            }
            for r in &outcome.runs {
                let verdict = r.convergence.as_ref().map(|c| format!("{:?}", c.verdict)).unwrap_or_else(|| "-".into());
                let f_error = r.f_error.map(|e| format!(", |f - r*| = {e:.4}")).unwrap_or_default();
                out.line(format!(
                    "seed {}: f(Q) = {:.6}{f_error}, residual {:.4}, {verdict}{}",
                    r.seed,
                    r.final_f_q,
                    r.final_residual,
                    r.divergence.as_ref().map(|d| format!(", diverged at n = {}", d.n)).unwrap_or_default()
                ));
            }
            out.line(format!("wrote {}", dir.display()));
        }
    }
    if outcome.runs.iter().any(|r| r.divergence.is_some()) {
        return Err(Failure::Runtime(Error::Divergence { n: 0, detail: "at least one run diverged".into() }));
    }
    Ok(())
}

fn ode_check(cli: &Cli, out: &mut Output, path: &Path) -> Result<(), Failure> {
    let (exp, root) = load_experiment(cli, path)?;
    let report = harness::with_jobs(cli.jobs, || harness::ode_check(&exp))??;
    let dir = experiment_dir(&root, &exp)?;
    harness::write_json(&dir.join("ode-check.json"), &report)?;
    let checks = [
        ("distance_nonincreasing", &report.distance_nonincreasing),
        ("decomposition", &report.decomposition),
        ("origin_stability", &report.origin_stability),
    ];
    match cli.format {
        Format::Json => out.json(&report)?,
        Format::Csv => {
            out.line("check,passed,worst,tolerance");
            for (name, c) in checks {
                out.line(format!("{name},{},{},{}", c.passed, c.worst, c.tolerance));
            }
        }
        Format::Text => {
            for (name, c) in checks {
                out.line(format!(
                    "{} {name}: worst {:.3e} (tolerance {:.1e})",
                    if c.passed { "ok  " } else { "FAIL" },
                    c.worst,
                    c.tolerance
                ));
            }
        }
    }
    if report.passed {
        Ok(())
    } else {
        Err(Rejected("ODE property check failed".into()).into())
    }
}

fn sweep(cli: &Cli, out: &mut Output, path: &Path) -> Result<(), Failure> {
    let (exp, root) = load_experiment(cli, path)?;
    let dir = experiment_dir(&root, &exp)?;
    let outcome = harness::with_jobs(cli.jobs, || harness::sweep(&exp, Some(&dir)))??;
    harness::write_sweep(&dir, &outcome)?;
    match cli.format {
        Format::Json => out.json(&outcome)?,
        Format::Csv => out.line(std::fs::read_to_string(dir.join("sweep.csv"))?.trim_end().to_string()),
        Format::Text => {
            for (k, cell) in outcome.cells.iter().enumerate() {
                let status = if cell.validation.passed { "valid" } else { "rejected" };
                let worst = cell.runs.iter().map(|r| r.final_residual).fold(f64::NAN, f64::max);
                out.line(format!(
                    "cell {k}: A = {}, sigma = {}, {:?}: {status}, {} runs, worst residual {worst:.4}",
                    cell.a,
                    cell.sigma,
                    cell.scheduler,
                    cell.runs.len()
                ));
            }
            out.line(format!("wrote {}", dir.display()));
        }
    }
    Ok(())
}

fn accept(cli: &Cli, out: &mut Output, criteria: &[u8]) -> Result<(), Failure> {
    let ids: Vec<u8> = if criteria.is_empty() { CRITERION_IDS.to_vec() } else { criteria.to_vec() };
    if let Some(bad) = ids.iter().find(|id| !CRITERION_IDS.contains(id)) {
        return Err(Rejected(format!("no criterion {bad}; valid ids are 1 to {}", CRITERION_IDS.len())).into());
    }
    let outcomes = harness::with_jobs(cli.jobs, || acceptance::run_acceptance(&ids))?;
    match cli.format {
        Format::Json => out.json(&outcomes)?,
        Format::Csv => {
            out.line("id,title,passed,elapsed_secs");
            for o in &outcomes {
                out.line(format!("{},{},{},{}", o.id, o.title, o.passed, o.elapsed_secs));
            }
        }
        Format::Text => {
            for o in &outcomes {
                out.line(o.to_string());
            }
        }
    }
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Rejected(format!("acceptance failed for criteria {}", failed.join(", "))).into())
    }
}

fn zoo(cli: &Cli, out: &mut Output, export: Option<&Path>) -> Result<(), Failure> {
    let entries = model_zoo();
    if let Some(dir) = export {
        std::fs::create_dir_all(dir)?;
        for e in &entries {
            e.model.write_path(dir.join(format!("{}.json", e.name)))?;
        }
    }
    match cli.format {
        Format::Json => out.json(&entries)?,
        Format::Csv => {
            out.line("name,weakly_communicating,rstar,t_min");
            for e in &entries {
                out.line(format!(
                    "{},{},{},{}",
                    e.name,
                    e.weakly_communicating,
                    e.rstar.map(|r| r.to_string()).unwrap_or_default(),
                    e.t_min
                ));
            }
        }
        Format::Text => {
            for e in &entries {
                out.line(format!("{:<10} {}", e.name, e.description));
            }
            if let Some(dir) = export {
                out.line(format!("wrote {} models to {}", entries.len(), dir.display()));
            }
        }
    }
    Ok(())
}
