use serde::Serialize;

use super::run::RunTrace;
use crate::error::{Error, Result};
use crate::smdp::{sup_distance, DeterministicPolicy, QTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ConvergedToPoint,
    ConvergedToSet,
    NotConverged,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub verdict: Verdict,
    /// Largest residual over checkpoints in the window.
    pub max_residual: f64,
    /// Largest `‖Q_m − Q_n‖∞` between snapshots in the window.
    pub max_pairwise: f64,
    pub snapshots: usize,
    pub window_start: u64,
}

/// Minimum number of snapshots the detector needs in its window.
pub const MIN_WINDOW_SNAPSHOTS: usize = 10;

/// Classifies the tail of a trace: the window holds checkpoints with
/// `n ≥ (1 − window_fraction) · n_last`.
pub fn convergence_detector(
    trace: &RunTrace,
    window_fraction: f64,
    tol_point: f64,
    tol_set: f64,
) -> Result<ConvergenceReport> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Parameter(format!("window fraction must lie in (0, 1], got {window_fraction}")));
    }
    let last = trace.checkpoints.last().ok_or_else(|| Error::Input("empty trace".into()))?.n;
    let window_start = ((1.0 - window_fraction) * last as f64).ceil() as u64;
    let window: Vec<_> = trace.checkpoints.iter().filter(|c| c.n >= window_start).collect();
    let snapshots: Vec<&[f64]> = window.iter().filter_map(|c| c.q.as_deref()).collect();
    if snapshots.len() < MIN_WINDOW_SNAPSHOTS {
        return Err(Error::Input(format!(
            "window from n = {window_start} holds {} snapshots, need {MIN_WINDOW_SNAPSHOTS}",
            snapshots.len()
        )));
    }
    let max_residual = window.iter().map(|c| c.residual_inf).fold(0.0, f64::max);
    let mut max_pairwise: f64 = 0.0;
    for (k, a) in snapshots.iter().enumerate() {
        for b in &snapshots[k + 1..] {
            max_pairwise = max_pairwise.max(sup_distance(a, b));
        }
    }
    let verdict = if max_residual > tol_set {
        Verdict::NotConverged
    } else if max_pairwise <= tol_point {
        Verdict::ConvergedToPoint
    } else {
        Verdict::ConvergedToSet
    };
    Ok(ConvergenceReport { verdict, max_residual, max_pairwise, snapshots: snapshots.len(), window_start })
}

/// Greedy actions, ties to the lowest index.
pub fn greedy_policy(q: &QTable) -> DeterministicPolicy {
    let actions = (0..q.num_states())
        .map(|s| {
            let row = q.row(s);
            let mut best = 0;
            for (a, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    DeterministicPolicy::from_actions(actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::run::Checkpoint;
    use crate::schedules::ValidationReport;

    fn trace(points: Vec<(f64, Vec<f64>)>) -> RunTrace {
        let checkpoints = points
            .into_iter()
            .enumerate()
            .map(|(k, (residual, q))| Checkpoint {
                n: k as u64 * 100,
                f_q: 0.0,
                residual_inf: residual,
                t_err_max: 0.0,
                q: Some(q),
            })
            .collect();
        RunTrace {
            seed: 0,
            config_hash: String::new(),
            validation: ValidationReport { passed: true, a_star: 3.0, checks: vec![] },
            overridden: false,
            checkpoints,
            counter_history: vec![],
            final_q: QTable::zeros(1, 2),
            final_t: vec![1.0, 1.0],
            divergence: None,
        }
    }

    #[test]
    fn frozen_trace_is_a_point() {
        let t = trace(vec![(0.0, vec![1.0, 2.0]); 20]);
        assert_eq!(convergence_detector(&t, 0.5, 0.1, 0.1).unwrap().verdict, Verdict::ConvergedToPoint);
    }

    #[test]
    fn oscillation_between_solutions_is_a_set() {
        let t = trace((0..20).map(|k| (0.0, vec![f64::from(k % 2), 0.0])).collect());
        let report = convergence_detector(&t, 1.0, 0.1, 0.1).unwrap();
        assert_eq!(report.verdict, Verdict::ConvergedToSet);
        assert_eq!(report.max_pairwise, 1.0);
    }

    #[test]
    fn large_residual_is_not_converged() {
        let t = trace((0..20).map(|k| (if k == 19 { 0.5 } else { 0.0 }, vec![0.0, 0.0])).collect());
        assert_eq!(convergence_detector(&t, 0.5, 0.1, 0.1).unwrap().verdict, Verdict::NotConverged);
    }

    #[test]
    fn too_few_snapshots() {
        let t = trace(vec![(0.0, vec![0.0, 0.0]); 20]);
        assert!(matches!(convergence_detector(&t, 0.2, 0.1, 0.1), Err(Error::Input(_))));
    }

    #[test]
    fn greedy_ties_go_low() {
        let q = QTable::from_vec(3, vec![1.0, 3.0, 2.0, 2.0, 2.0, 1.0]).unwrap();
        assert_eq!(greedy_policy(&q).actions(), &[1, 0]);
    }
}
