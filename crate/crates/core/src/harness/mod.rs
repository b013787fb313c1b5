//! Experiments, built-in models and the acceptance battery.

pub mod config;
pub mod zoo;

pub use config::{
    resolve_output_dir, DetectorSpec, ExperimentConfig, ModelSource, NamedRate, OdeSpec, RateSpec, ResolvedExperiment,
    RviSpec, SchedulerSpec, SweepSpec, DEFAULT_OUTPUT_DIR, DEFAULT_SEEDS, OUTPUT_ENV,
};
pub use zoo::{model_zoo, zoo_entry, zoo_names, ModelZooEntry};
pub mod experiment;
pub use experiment::{
    experiment_dir, learn, learning_gate, model_check, ode_check, solve_rvi, sweep, trace_file_name, with_jobs,
    write_json, write_learn, write_rvi, write_sweep, LearnOutcome, LearnRunSummary, ModelCheckReport, OdeCheck,
    OdeCheckReport, RviOutcome, SweepCell, SweepOutcome, SweepRun,
};
pub mod acceptance;
pub use acceptance::{run_acceptance, run_criterion, CriterionOutcome, CRITERION_IDS, MASTER_SEEDS};
