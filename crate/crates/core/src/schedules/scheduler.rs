use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smdp::strongly_connected_components;

/// How the update set `Y_n` is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AsyncScheduler {
    Synchronous,
    /// `k` distinct components drawn uniformly at every step.
    UniformRandom {
        k: usize,
    },
    RoundRobin,
    /// A single component per step following an irreducible chain over the
    /// components.
    MarkovChain {
        matrix: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub dim: usize,
    /// Next component for round robin, current component for a chain.
    pub cursor: usize,
}

impl AsyncScheduler {
    /// Lazy random walk on the cycle `0 → 1 → … → d−1 → 0`: advance with
    /// probability `advance`, otherwise jump uniformly.
    pub fn random_walk(dim: usize, advance: f64) -> Result<Self> {
        if dim == 0 || !(0.0..=1.0).contains(&advance) {
            return Err(Error::Parameter(format!(
                "random walk needs dim ≥ 1 and advance in [0,1], got ({dim}, {advance})"
            )));
        }
        let uniform = (1.0 - advance) / dim as f64;
        let matrix = (0..dim)
            .map(|i| {
                let mut row = vec![uniform; dim];
                row[(i + 1) % dim] += advance;
                row
            })
            .collect();
        Ok(AsyncScheduler::MarkovChain { matrix })
    }

    pub fn is_synchronous(&self) -> bool {
        matches!(self, AsyncScheduler::Synchronous)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::Parameter("scheduler needs at least one component".into()));
        }
        match self {
            AsyncScheduler::Synchronous | AsyncScheduler::RoundRobin => Ok(()),
            AsyncScheduler::UniformRandom { k } => {
                if *k == 0 || *k > dim {
                    Err(Error::Parameter(format!("uniform scheduler needs 1 ≤ k ≤ {dim}, got {k}")))
                } else {
                    Ok(())
                }
            }
            AsyncScheduler::MarkovChain { matrix } => {
                if matrix.len() != dim || matrix.iter().any(|row| row.len() != dim) {
                    return Err(Error::Parameter(format!("scheduler matrix must be {dim} x {dim}")));
                }
                for (i, row) in matrix.iter().enumerate() {
                    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                        return Err(Error::Parameter(format!("scheduler row {i} has a negative entry")));
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > 1e-12 {
                        return Err(Error::Parameter(format!("scheduler row {i} sums to {sum}")));
                    }
                }
                let adjacency: Vec<Vec<usize>> =
                    matrix.iter().map(|row| (0..dim).filter(|&j| row[j] > 0.0).collect()).collect();
                if strongly_connected_components(&adjacency).len() != 1 {
                    return Err(Error::Parameter("scheduler chain is not irreducible".into()));
                }
                Ok(())
            }
        }
    }

    pub fn start(&self, dim: usize) -> Result<SchedulerState> {
        self.validate(dim)?;
        Ok(SchedulerState { dim, cursor: 0 })
    }

    /// Draws `Y_n` (sorted, nonempty) and the next scheduler state.
    pub fn next_update_set<R: Rng + ?Sized>(
        &self,
        state: &SchedulerState,
        rng: &mut R,
    ) -> (Vec<usize>, SchedulerState) {
        let mut next = state.clone();
        let mut set = Vec::new();
        self.advance(&mut next, rng, &mut set);
        (set, next)
    }

    /// In-place form of [`AsyncScheduler::next_update_set`].
    pub fn advance<R: Rng + ?Sized>(&self, state: &mut SchedulerState, rng: &mut R, set: &mut Vec<usize>) {
        set.clear();
        let d = state.dim;
        match self {
            AsyncScheduler::Synchronous => set.extend(0..d),
            AsyncScheduler::RoundRobin => {
                set.push(state.cursor);
                state.cursor = (state.cursor + 1) % d;
            }
            AsyncScheduler::UniformRandom { k } => {
                set.extend(rand::seq::index::sample(rng, d, *k).iter());
                set.sort_unstable();
            }
            AsyncScheduler::MarkovChain { matrix } => {
                set.push(state.cursor);
                let u: f64 = rng.random();
                let row = &matrix[state.cursor];
                let mut acc = 0.0;
                // fall back to the last positive entry if rounding leaves u above the total
                let mut chosen = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
                for (j, &p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        chosen = j;
                        break;
                    }
                }
                state.cursor = chosen;
            }
        }
    }
}

/// `ν(n, i)`: how many of the first `n` update sets contained `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateCounters {
    pub nu: Vec<u64>,
    pub n: u64,
}

impl UpdateCounters {
    pub fn new(dim: usize) -> Self {
        UpdateCounters { nu: vec![0; dim], n: 0 }
    }

    pub fn record(&mut self, set: &[usize]) {
        for &i in set {
            self.nu[i] += 1;
        }
        self.n += 1;
    }

    pub fn ratios(&self) -> Vec<f64> {
        let n = self.n.max(1) as f64;
        self.nu.iter().map(|&v| v as f64 / n).collect()
    }
}
