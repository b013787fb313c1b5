//! Experiment configuration files.
//!
//! ```json
//! {"model": {"zoo": "wc3"},
//!  "rate_function": "mean",
//!  "alpha": {"kind": "class2", "A": 4.0},
//!  "sigma": 4.0,
//!  "scheduler": {"kind": "random_walk", "advance": 0.5},
//!  "iters": 500000,
//!  "seeds": [1, 2, 3, 4, 5]}
//! ```
//!
//! Omitted fields take defaults: `beta` is `sigma` times `alpha`, the
//! threshold inputs come from the model and `f`, and checkpoints are taken
//! every `iters / 1000` steps.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use super::zoo::{zoo_entry, zoo_names};
use crate::error::{Error, Result};
use crate::learning::{LearnerConfig, RunConfig, DEFAULT_SNAPSHOT_EVERY};
use crate::rate::RateFunction;
use crate::schedules::{AsyncScheduler, FloorSchedule, ParamThresholds, StepSchedule, DEFAULT_GAMMA};
use crate::smdp::{ModelFile, SmdpModel};

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "SMDP_RVI_OUT";
pub const DEFAULT_OUTPUT_DIR: &str = "smdp-rvi-out";
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    Zoo(String),
    /// Relative paths are resolved against the config file's directory.
    Path(PathBuf),
    Inline(ModelFile),
}

impl ModelSource {
    /// Reads a command-line model argument: a zoo name or a JSON file.
    pub fn from_arg(arg: &str) -> Self {
        if zoo_entry(arg).is_some() {
            ModelSource::Zoo(arg.to_string())
        } else {
            ModelSource::Path(PathBuf::from(arg))
        }
    }

    pub fn load(&self, base_dir: &Path) -> Result<(String, SmdpModel)> {
        match self {
            ModelSource::Zoo(name) => zoo_entry(name)
                .map(|e| (name.clone(), e.model))
                .ok_or_else(|| Error::Input(format!("unknown zoo model {name:?}; known: {}", zoo_names().join(", ")))),
            ModelSource::Path(path) => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                let model = SmdpModel::from_path(&full)?;
                let name = full.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                Ok((name, model))
            }
            ModelSource::Inline(file) => Ok(("inline".to_string(), SmdpModel::try_from(file.clone())?)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedRate {
    /// Average of all components.
    Mean,
    /// Largest component.
    Max,
    /// Smallest component.
    Min,
}

/// Either a name from [`NamedRate`] or a full [`RateFunction`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum RateSpec {
    Named(NamedRate),
    Explicit(RateFunction),
}

impl Default for RateSpec {
    fn default() -> Self {
        RateSpec::Named(NamedRate::Mean)
    }
}

impl<'de> Deserialize<'de> for RateSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let value = serde_json::Value::deserialize(deserializer)?;
        if value.is_string() {
            NamedRate::deserialize(value)
                .map(RateSpec::Named)
                .map_err(|e| D::Error::custom(format!("rate_function: {e}")))
        } else {
            RateFunction::deserialize(value)
                .map(RateSpec::Explicit)
                .map_err(|e| D::Error::custom(format!("rate_function: {e}")))
        }
    }
}

impl RateSpec {
    pub fn build(&self, dim: usize) -> Result<RateFunction> {
        let all: Vec<usize> = (0..dim).collect();
        let f = match self {
            RateSpec::Named(NamedRate::Mean) => RateFunction::mean(dim)?,
            RateSpec::Named(NamedRate::Max) => RateFunction::max_over(0.0, 1.0, all, dim)?,
            RateSpec::Named(NamedRate::Min) => RateFunction::min_over(0.0, 1.0, all, dim)?,
            RateSpec::Explicit(f) => f.clone(),
        };
        if f.dim() != dim {
            return Err(Error::Parameter(format!("rate function has dimension {}, model has {dim} pairs", f.dim())));
        }
        f.validate()?;
        Ok(f)
    }
}

/// [`AsyncScheduler`] plus a lazy random walk shorthand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchedulerSpec {
    Synchronous,
    UniformRandom {
        k: usize,
    },
    RoundRobin,
    MarkovChain {
        matrix: Vec<Vec<f64>>,
    },
    /// See [`AsyncScheduler::random_walk`].
    RandomWalk {
        advance: f64,
    },
}

impl Default for SchedulerSpec {
    fn default() -> Self {
        SchedulerSpec::RandomWalk { advance: 0.5 }
    }
}

impl SchedulerSpec {
    pub fn build(&self, dim: usize) -> Result<AsyncScheduler> {
        let scheduler = match self {
            SchedulerSpec::Synchronous => AsyncScheduler::Synchronous,
            SchedulerSpec::UniformRandom { k } => AsyncScheduler::UniformRandom { k: *k },
            SchedulerSpec::RoundRobin => AsyncScheduler::RoundRobin,
            SchedulerSpec::MarkovChain { matrix } => AsyncScheduler::MarkovChain { matrix: matrix.clone() },
            SchedulerSpec::RandomWalk { advance } => AsyncScheduler::random_walk(dim, *advance)?,
        };
        scheduler.validate(dim)?;
        Ok(scheduler)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSpec {
    pub window_fraction: f64,
    pub tol_point: f64,
    pub tol_set: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec { window_fraction: 0.1, tol_point: 0.1, tol_set: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RviSpec {
    /// Defaults to `0.9 · t_min`.
    pub alpha_bar: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for RviSpec {
    fn default() -> Self {
        RviSpec { alpha_bar: None, max_iters: 1_000_000, tol: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeSpec {
    /// Random starts for the `h′` distance and decomposition checks.
    pub starts: usize,
    pub t_end: f64,
    /// Random starts for the `h∞` stability check.
    pub infinity_starts: usize,
    pub infinity_t_end: f64,
    pub dt: f64,
    /// Starts are uniform on `[-start_scale, start_scale]^d`.
    pub start_scale: f64,
    pub seed: u64,
    pub decomposition_tol: f64,
    pub origin_tol: f64,
}

impl Default for OdeSpec {
    fn default() -> Self {
        OdeSpec {
            starts: 20,
            t_end: 20.0,
            infinity_starts: 50,
            infinity_t_end: 40.0,
            dt: 1e-2,
            start_scale: 5.0,
            seed: 0,
            decomposition_tol: 1e-6,
            origin_tol: 1e-4,
        }
    }
}

/// Grid over the stepsize scale `A`, `ς` and the scheduler. Each cell
/// keeps the class of `alpha` and uses `beta = ς · alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub schedulers: Vec<SchedulerSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    #[serde(default)]
    pub rate_function: RateSpec,
    pub alpha: StepSchedule,
    #[serde(default)]
    pub beta: Option<StepSchedule>,
    #[serde(default)]
    pub eta: FloorSchedule,
    #[serde(default)]
    pub scheduler: SchedulerSpec,
    #[serde(default)]
    pub gauss_seidel: bool,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub t_min_lower_bound: Option<f64>,
    #[serde(default)]
    pub lipschitz_bound: Option<f64>,
    #[serde(default)]
    pub override_validation: bool,
    pub iters: u64,
    #[serde(default)]
    pub checkpoint_every: Option<u64>,
    #[serde(default)]
    pub snapshot_every: Option<u64>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub q0: Option<Vec<f64>>,
    #[serde(default)]
    pub t0: Option<Vec<f64>>,
    #[serde(default)]
    pub detector: DetectorSpec,
    #[serde(default)]
    pub rvi: RviSpec,
    #[serde(default)]
    pub ode: OdeSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

/// A configuration with every default filled in and every field checked.
#[derive(Clone, Debug)]
pub struct ResolvedExperiment {
    pub model_name: String,
    pub model: SmdpModel,
    pub f: RateFunction,
    /// Run template; the seed is set per run.
    pub run: RunConfig,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub detector: DetectorSpec,
    pub rvi: RviSpec,
    pub ode: OdeSpec,
    pub sweep: Option<SweepSpec>,
    /// SHA-256 over the semantic content; seeds and output location are
    /// excluded.
    pub hash: String,
}

impl ResolvedExperiment {
    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig { seed, ..self.run.clone() }
    }

    /// First twelve hex digits of the hash, used for directory names.
    pub fn short_hash(&self) -> &str {
        &self.hash[..12]
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("config: {e}")))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Command-line overrides: `--iters` and `--seed` (which replaces the
    /// seed list).
    pub fn with_overrides(mut self, iters: Option<u64>, seed: Option<u64>) -> Self {
        if let Some(iters) = iters {
            self.iters = iters;
        }
        if let Some(seed) = seed {
            self.seeds = Some(vec![seed]);
        }
        self
    }

    /// Fills defaults and validates, collecting every problem found.
    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedExperiment> {
        let mut errors = Vec::new();
        let mut note = |field: &str, e: Error| errors.push(format!("{field}: {e}"));

        let (model_name, model) = match self.model.load(base_dir) {
            Ok(loaded) => loaded,
            Err(e) => {
                note("model", e);
                return Err(Error::Validation(errors));
            }
        };
        let d = model.num_pairs();
        let f = self.rate_function.build(d).map_err(|e| note("rate_function", e)).ok();

        if let Err(e) = self.alpha.validate() {
            note("alpha", e);
        }
        let sigma = match (self.sigma, &self.beta) {
            (Some(s), _) => Some(s),
            (None, Some(StepSchedule::ScaledCopy { base, factor })) if **base == self.alpha => Some(*factor),
            (None, None) => {
                note("sigma", Error::Parameter("required unless beta is a scaled copy of alpha".into()));
                None
            }
            (None, Some(_)) => {
                note("sigma", Error::Parameter("required when beta is given explicitly".into()));
                None
            }
        };
        let beta = match (&self.beta, sigma) {
            (Some(beta), _) => Some(beta.clone()),
            (None, Some(s)) => Some(StepSchedule::ScaledCopy { base: Box::new(self.alpha.clone()), factor: s }),
            (None, None) => None,
        };
        if let Some(Err(e)) = beta.as_ref().map(StepSchedule::validate) {
            note("beta", e);
        }
        if let Err(e) = self.eta.validate() {
            note("eta", e);
        }
        let scheduler = self.scheduler.build(d).map_err(|e| note("scheduler", e)).ok();

        let thresholds = match (&f, sigma) {
            (Some(f), Some(sigma)) => ParamThresholds::new(
                self.t_min_lower_bound.unwrap_or(model.t_min()),
                self.lipschitz_bound.unwrap_or(f.lipschitz_bound()),
                sigma,
                self.gamma.unwrap_or(DEFAULT_GAMMA),
            )
            .map_err(|e| note("thresholds", e))
            .ok(),
            _ => None,
        };
        if let Some(lb) = self.t_min_lower_bound {
            if lb > model.t_min() {
                note(
                    "t_min_lower_bound",
                    Error::Parameter(format!("{lb} exceeds the model's t_min = {}", model.t_min())),
                );
            }
        }
        if let (Some(f), Some(l)) = (&f, self.lipschitz_bound) {
            if l < f.lipschitz_bound() {
                note(
                    "lipschitz_bound",
                    Error::Parameter(format!("{l} is below the rate function's bound {}", f.lipschitz_bound())),
                );
            }
        }

        if self.iters == 0 {
            note("iters", Error::Parameter("must be positive".into()));
        }
        let checkpoint_every = self.checkpoint_every.unwrap_or((self.iters / 1000).max(1));
        let snapshot_every = self.snapshot_every.unwrap_or(DEFAULT_SNAPSHOT_EVERY);
        if checkpoint_every == 0 {
            note("checkpoint_every", Error::Parameter("must be positive".into()));
        }
        if snapshot_every == 0 {
            note("snapshot_every", Error::Parameter("must be positive".into()));
        }
        let seeds = self.seeds.clone().unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
        if seeds.is_empty() {
            note("seeds", Error::Parameter("list is empty".into()));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            note("seeds", Error::Parameter("list has duplicates".into()));
        }
        for (field, v) in [("q0", &self.q0), ("t0", &self.t0)] {
            if let Some(v) = v {
                if v.len() != d {
                    note(field, Error::Parameter(format!("has {} entries, model has {d} pairs", v.len())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    note(field, Error::Parameter("entries must be finite".into()));
                }
            }
        }
        if let Some(t0) = &self.t0 {
            if t0.iter().any(|&x| x <= 0.0) {
                note("t0", Error::Parameter("entries must be positive".into()));
            }
        }
        let det = &self.detector;
        if !(det.window_fraction > 0.0 && det.window_fraction <= 1.0) {
            note(
                "detector.window_fraction",
                Error::Parameter(format!("must lie in (0, 1], got {}", det.window_fraction)),
            );
        }
        if !(det.tol_point > 0.0 && det.tol_set > 0.0) {
            note("detector", Error::Parameter("tolerances must be positive".into()));
        }
        if let Some(a) = self.rvi.alpha_bar {
            if !(a > 0.0 && a < model.t_min()) {
                note("rvi.alpha_bar", Error::Parameter(format!("must lie in (0, t_min = {}), got {a}", model.t_min())));
            }
        }
        if !(self.rvi.tol > 0.0) || self.rvi.max_iters == 0 {
            note("rvi", Error::Parameter("tol and max_iters must be positive".into()));
        }
        let ode = &self.ode;
        if !(ode.dt > 0.0 && ode.t_end > 0.0 && ode.infinity_t_end > 0.0 && ode.start_scale > 0.0) {
            note("ode", Error::Parameter("dt, horizons and start_scale must be positive".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.a.is_empty() || sweep.sigma.is_empty() {
                note("sweep", Error::Parameter("A and sigma lists must be nonempty".into()));
            }
            if sweep.a.iter().chain(&sweep.sigma).any(|v| !(v.is_finite() && *v > 0.0)) {
                note("sweep", Error::Parameter("A and sigma values must be finite and positive".into()));
            }
            if self.alpha.class().is_none() {
                note("sweep", Error::Parameter("alpha must be class 1 or class 2 to sweep its scale".into()));
            }
            for (k, s) in sweep.schedulers.iter().enumerate() {
                if let Err(e) = s.build(d) {
                    note(&format!("sweep.schedulers[{k}]"), e);
                }
            }
        }

        let (Some(f), Some(beta), Some(scheduler), Some(thresholds)) = (f, beta, scheduler, thresholds) else {
            return Err(Error::Validation(errors));
        };
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }
        let run = RunConfig {
            learner: LearnerConfig {
                alpha: self.alpha.clone(),
                beta,
                eta: self.eta.clone(),
                scheduler,
                gauss_seidel: self.gauss_seidel,
            },
            thresholds,
            override_validation: self.override_validation,
            iters: self.iters,
            checkpoint_every,
            snapshot_every,
            seed: 0,
            q0: self.q0.clone(),
            t0: self.t0.clone(),
        };
        let hash = semantic_hash(&model, &f, &run, &self.detector, &self.rvi, &self.ode, &self.sweep)?;
        Ok(ResolvedExperiment {
            model_name,
            model,
            f,
            run,
            seeds,
            output_dir: self.output_dir.clone(),
            detector: self.detector.clone(),
            rvi: self.rvi.clone(),
            ode: self.ode.clone(),
            sweep: self.sweep.clone(),
            hash,
        })
    }
}

fn semantic_hash(
    model: &SmdpModel,
    f: &RateFunction,
    run: &RunConfig,
    detector: &DetectorSpec,
    rvi: &RviSpec,
    ode: &OdeSpec,
    sweep: &Option<SweepSpec>,
) -> Result<String> {
    let text = serde_json::to_string(&(ModelFile::from(model), f, run, detector, rvi, ode, sweep))?;
    Ok(Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
}

/// Output directory: explicit flag, then the config, then
/// [`OUTPUT_ENV`], then [`DEFAULT_OUTPUT_DIR`].
pub fn resolve_output_dir(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    flag.or(config)
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}
