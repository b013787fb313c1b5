//! Stepsizes, the holding-time floor `η_n`, component selection and the
//! parameter thresholds that gate single-point convergence.

mod scheduler;
mod step;
mod validate;

pub use scheduler::{AsyncScheduler, SchedulerState, UpdateCounters};
pub use step::{FloorSchedule, StepSchedule};
pub use validate::{
    asynchrony_diagnostics, validate_params, AsynchronyReport, AsynchronySnapshot, ParamCheck, ParamThresholds,
    UpdateMode, ValidationReport, DEFAULT_GAMMA, TAIL_CHECK_POINTS,
};
