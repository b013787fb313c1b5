//! Reward-rate estimators `f: R^d -> R`.
//!
//! RVI Q-learning subtracts `f(Q_n)` from every update; the iterates settle
//! where `f(q) = r*`. Every admissible `f` is Lipschitz and strictly
//! increasing under scalar translation (SISTr): `c -> f(x + c·1)` is strictly
//! increasing and onto `R` for every `x`. The family below is closed under
//! the combinators it offers, and each member has an analytic scaling limit
//! `f_inf(x) = lim f(c x) / c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smdp::SmdpModel;

/// Default half-width of the initial translation bracket.
pub const BRACKET_HALF_WIDTH: f64 = 1.0;
/// Bracket expansion factor.
pub const BRACKET_FACTOR: f64 = 2.0;
/// Expansion stops (and the function is declared non-SISTr) past this.
pub const BRACKET_BOUND: f64 = 1e9;
/// Default tolerance of [`RateFunction::solve_translation`].
pub const TRANSLATION_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combinator {
    WeightedSum { weights: Vec<f64> },
    Max,
    Min,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateFunction {
    /// `b + θᵀx`.
    Affine {
        bias: f64,
        weights: Vec<f64>,
    },
    /// `b + β max_{i∈D} x_i`.
    MaxOverSubset {
        bias: f64,
        scale: f64,
        subset: Vec<usize>,
        dim: usize,
    },
    /// `b + β min_{i∈D} x_i`.
    MinOverSubset {
        bias: f64,
        scale: f64,
        subset: Vec<usize>,
        dim: usize,
    },
    Composite {
        combinator: Combinator,
        children: Vec<RateFunction>,
    },
    /// A two-dimensional function whose scaling limit is SISTr only at the
    /// origin; written in the basis `v_a = (1,-1)`, `v_c = (1,1)`.
    #[serde(rename = "example_2d")]
    Example2D,
    /// One-step Bellman estimate at a fixed pair `(s̄, ā)`:
    /// `(r + Σ p max_a' Q(s',a') − Q(s̄,ā)) / t`. Invariant under
    /// translation, so not SISTr; usable only by exact RVI.
    ReferencePair {
        pair: usize,
        num_actions: usize,
        dim: usize,
        reward: f64,
        holding: f64,
        successors: Vec<(usize, f64)>,
    },
}

impl RateFunction {
    pub fn affine(bias: f64, weights: Vec<f64>) -> Result<Self> {
        let f = RateFunction::Affine { bias, weights };
        f.validate()?;
        Ok(f)
    }

    /// Average of all components.
    pub fn mean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("mean needs dimension ≥ 1".into()));
        }
        Self::affine(0.0, vec![1.0 / dim as f64; dim])
    }

    pub fn max_over(bias: f64, scale: f64, subset: Vec<usize>, dim: usize) -> Result<Self> {
        let f = RateFunction::MaxOverSubset { bias, scale, subset, dim };
        f.validate()?;
        Ok(f)
    }

    pub fn min_over(bias: f64, scale: f64, subset: Vec<usize>, dim: usize) -> Result<Self> {
        let f = RateFunction::MinOverSubset { bias, scale, subset, dim };
        f.validate()?;
        Ok(f)
    }

    pub fn composite(combinator: Combinator, children: Vec<RateFunction>) -> Result<Self> {
        let f = RateFunction::Composite { combinator, children };
        f.validate()?;
        Ok(f)
    }

    pub fn reference_pair(model: &SmdpModel, s: usize, a: usize) -> Result<Self> {
        let pair = model.check_pair(s, a)?;
        Ok(RateFunction::ReferencePair {
            pair,
            num_actions: model.num_actions(),
            dim: model.num_pairs(),
            reward: model.expected_reward(pair),
            holding: model.expected_holding(pair),
            successors: model.successors(pair).to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            RateFunction::Affine { weights, .. } => weights.len(),
            RateFunction::MaxOverSubset { dim, .. } | RateFunction::MinOverSubset { dim, .. } => *dim,
            RateFunction::Composite { children, .. } => children.first().map_or(0, RateFunction::dim),
            RateFunction::Example2D => 2,
            RateFunction::ReferencePair { dim, .. } => *dim,
        }
    }

    /// Structural checks that make the function Lipschitz and, except for
    /// [`RateFunction::ReferencePair`], SISTr.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        match self {
            RateFunction::Affine { bias, weights } => {
                if weights.is_empty() {
                    return bad("affine: empty weight vector".into());
                }
                if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
                    return bad("affine: non-finite coefficient".into());
                }
                let sum: f64 = weights.iter().sum();
                if sum <= 0.0 {
                    return bad(format!("affine: weights sum to {sum}, need > 0"));
                }
            }
            RateFunction::MaxOverSubset { bias, scale, subset, dim }
            | RateFunction::MinOverSubset { bias, scale, subset, dim } => {
                if !bias.is_finite() || !scale.is_finite() || *scale <= 0.0 {
                    return bad(format!("max/min: need finite bias and scale > 0, got ({bias}, {scale})"));
                }
                if subset.is_empty() {
                    return bad("max/min: empty subset".into());
                }
                if let Some(i) = subset.iter().find(|&&i| i >= *dim) {
                    return bad(format!("max/min: index {i} outside dimension {dim}"));
                }
                let mut sorted = subset.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != subset.len() {
                    return bad("max/min: repeated index in subset".into());
                }
            }
            RateFunction::Composite { combinator, children } => {
                if children.is_empty() {
                    return bad("composite: no children".into());
                }
                for child in children {
                    child.validate()?;
                    if matches!(child, RateFunction::ReferencePair { .. }) {
                        return bad("composite: reference-pair children are not SISTr".into());
                    }
                }
                let d = children[0].dim();
                if children.iter().any(|c| c.dim() != d) {
                    return bad("composite: children disagree on dimension".into());
                }
                if let Combinator::WeightedSum { weights } = combinator {
                    if weights.len() != children.len() {
                        return bad(format!("composite: {} weights for {} children", weights.len(), children.len()));
                    }
                    if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
                        return bad("composite: weights must be positive".into());
                    }
                }
            }
            RateFunction::Example2D => {}
            RateFunction::ReferencePair { pair, num_actions, dim, reward, holding, successors } => {
                if *num_actions == 0 || dim % num_actions != 0 || pair >= dim {
                    return bad("reference pair: inconsistent dimensions".into());
                }
                if !reward.is_finite() || !holding.is_finite() || *holding <= 0.0 {
                    return bad("reference pair: need finite reward and holding > 0".into());
                }
                let states = dim / num_actions;
                if successors.iter().any(|&(s, p)| s >= states || !(p > 0.0 && p <= 1.0)) {
                    return bad("reference pair: bad successor entry".into());
                }
            }
        }
        Ok(())
    }

    /// False only for the translation-invariant reference-pair estimator.
    pub fn is_sistr_by_construction(&self) -> bool {
        !matches!(self, RateFunction::ReferencePair { .. })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Domain(format!("rate function has dimension {}, got {}", self.dim(), x.len())));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.value(x))
    }

    pub fn eval_scaling_limit(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.limit_value(x))
    }

    /// Evaluation without the dimension check.
    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        match self {
            RateFunction::Affine { bias, weights } => bias + dot(weights, x),
            RateFunction::MaxOverSubset { bias, scale, subset, .. } => bias + scale * subset_max(subset, x),
            RateFunction::MinOverSubset { bias, scale, subset, .. } => bias + scale * subset_min(subset, x),
            RateFunction::Composite { combinator, children } => {
                combine(combinator, children.iter().map(|c| c.value(x)))
            }
            RateFunction::Example2D => example_2d(x, false),
            RateFunction::ReferencePair { pair, num_actions, reward, holding, successors, .. } => {
                reference_pair(x, *pair, *num_actions, *reward, *holding, successors)
            }
        }
    }

    pub(crate) fn limit_value(&self, x: &[f64]) -> f64 {
        match self {
            RateFunction::Affine { weights, .. } => dot(weights, x),
            RateFunction::MaxOverSubset { scale, subset, .. } => scale * subset_max(subset, x),
            RateFunction::MinOverSubset { scale, subset, .. } => scale * subset_min(subset, x),
            RateFunction::Composite { combinator, children } => {
                combine(combinator, children.iter().map(|c| c.limit_value(x)))
            }
            RateFunction::Example2D => example_2d(x, true),
            RateFunction::ReferencePair { pair, num_actions, holding, successors, .. } => {
                reference_pair(x, *pair, *num_actions, 0.0, *holding, successors)
            }
        }
    }

    /// Upper bound on the Lipschitz constant with respect to `‖·‖∞`.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            RateFunction::Affine { weights, .. } => weights.iter().map(|w| w.abs()).sum(),
            RateFunction::MaxOverSubset { scale, .. } | RateFunction::MinOverSubset { scale, .. } => *scale,
            RateFunction::Composite { combinator, children } => match combinator {
                Combinator::WeightedSum { weights } => {
                    weights.iter().zip(children).map(|(w, c)| w * c.lipschitz_bound()).sum()
                }
                Combinator::Max | Combinator::Min => {
                    children.iter().map(RateFunction::lipschitz_bound).fold(0.0, f64::max)
                }
            },
            RateFunction::Example2D => 4.0,
            RateFunction::ReferencePair { holding, .. } => 2.0 / holding,
        }
    }

    /// The unique `c` with `|f(x + c·1) − level| ≤ tol`, by bracket
    /// expansion and bisection.
    pub fn solve_translation(&self, x: &[f64], level: f64, tol: f64) -> Result<f64> {
        self.check_dim(x)?;
        if !(tol > 0.0) || !level.is_finite() {
            return Err(Error::Parameter(format!("solve_translation: tol {tol}, level {level}")));
        }
        let mut shifted = x.to_vec();
        let mut g = |c: f64| {
            for (y, &v) in shifted.iter_mut().zip(x) {
                *y = v + c;
            }
            self.value(&shifted) - level
        };

        let mut lo = -BRACKET_HALF_WIDTH;
        let mut hi = BRACKET_HALF_WIDTH;
        let mut g_lo = g(lo);
        while g_lo > 0.0 {
            hi = lo;
            lo *= BRACKET_FACTOR;
            if lo < -BRACKET_BOUND {
                return Err(Error::ContractViolation(format!(
                    "f(x + c) stays above {level} for c down to {}",
                    -BRACKET_BOUND
                )));
            }
            g_lo = g(lo);
        }
        let mut g_hi = g(hi);
        while g_hi < 0.0 {
            lo = hi;
            hi = if hi <= 0.0 { BRACKET_HALF_WIDTH } else { hi * BRACKET_FACTOR };
            if hi > BRACKET_BOUND {
                return Err(Error::ContractViolation(format!(
                    "f(x + c) stays below {level} for c up to {BRACKET_BOUND}"
                )));
            }
            g_hi = g(hi);
        }
        if g_lo.abs() <= tol {
            return Ok(lo);
        }
        if g_hi.abs() <= tol {
            return Ok(hi);
        }
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                return Err(Error::ContractViolation(format!(
                    "bisection collapsed at c = {mid} with |f(x + c) - {level}| > {tol}"
                )));
            }
            let g_mid = g(mid);
            if g_mid.abs() <= tol {
                return Ok(mid);
            }
            if g_mid < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn subset_max(subset: &[usize], x: &[f64]) -> f64 {
    subset.iter().map(|&i| x[i]).fold(f64::NEG_INFINITY, f64::max)
}

fn subset_min(subset: &[usize], x: &[f64]) -> f64 {
    subset.iter().map(|&i| x[i]).fold(f64::INFINITY, f64::min)
}

fn combine(combinator: &Combinator, values: impl Iterator<Item = f64>) -> f64 {
    match combinator {
        Combinator::WeightedSum { weights } => weights.iter().zip(values).map(|(w, v)| w * v).sum(),
        Combinator::Max => values.fold(f64::NEG_INFINITY, f64::max),
        Combinator::Min => values.fold(f64::INFINITY, f64::min),
    }
}

fn example_2d(x: &[f64], limit: bool) -> f64 {
    let xa = 0.5 * (x[0] - x[1]);
    let xc = 0.5 * (x[0] + x[1]);
    let phi = if limit { 1.0 } else { 1.0 - 0.5 * (-xa).exp() };
    if xa >= 0.0 && 0.0 <= xc && xc <= 0.5 * xa {
        2.0 * xc * phi
    } else if xa >= 0.0 && 0.5 * xa < xc && xc <= xa {
        if limit {
            xa
        } else {
            2.0 * (xa - xc) * phi + (2.0 * xc - xa)
        }
    } else {
        xc
    }
}

fn reference_pair(x: &[f64], pair: usize, na: usize, reward: f64, holding: f64, successors: &[(usize, f64)]) -> f64 {
    let next: f64 = successors
        .iter()
        .map(|&(s, p)| p * x[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    (reward + next - x[pair]) / holding
}

/// Evidence that `c -> g(x + c·1)` failed to be strictly increasing or onto.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SistrWitness {
    NotIncreasing { probe: usize, c_lo: f64, c_hi: f64, value_lo: f64, value_hi: f64 },
    Bounded { probe: usize, reach: f64, value_below: f64, value_at: f64, value_above: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SistrReport {
    pub passed: bool,
    pub witnesses: Vec<SistrWitness>,
}

/// Translation used by the onto check: `g(x ± C)` must move at least one
/// unit away from `g(x)`.
pub const ONTO_REACH: f64 = 1e9;

/// Samples the SISTr property of `f` at each probe over `c_grid`.
pub fn check_sistr(f: &RateFunction, probes: &[Vec<f64>], c_grid: &[f64]) -> Result<SistrReport> {
    check_translation_monotone(probes, c_grid, f.dim(), |x| f.value(x))
}

/// The same check applied to the scaling limit `f_inf`.
pub fn check_sistr_scaling_limit(f: &RateFunction, probes: &[Vec<f64>], c_grid: &[f64]) -> Result<SistrReport> {
    check_translation_monotone(probes, c_grid, f.dim(), |x| f.limit_value(x))
}

fn check_translation_monotone(
    probes: &[Vec<f64>],
    c_grid: &[f64],
    dim: usize,
    g: impl Fn(&[f64]) -> f64,
) -> Result<SistrReport> {
    if c_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Parameter("c_grid must be strictly increasing".into()));
    }
    if let Some(p) = probes.iter().find(|p| p.len() != dim) {
        return Err(Error::Domain(format!("probe of dimension {}, function has {dim}", p.len())));
    }
    let shifted = |x: &[f64], c: f64| -> f64 {
        let y: Vec<f64> = x.iter().map(|v| v + c).collect();
        g(&y)
    };
    let mut witnesses = Vec::new();
    for (k, x) in probes.iter().enumerate() {
        let values: Vec<f64> = c_grid.iter().map(|&c| shifted(x, c)).collect();
        for i in 1..values.len() {
            if !(values[i] > values[i - 1]) {
                witnesses.push(SistrWitness::NotIncreasing {
                    probe: k,
                    c_lo: c_grid[i - 1],
                    c_hi: c_grid[i],
                    value_lo: values[i - 1],
                    value_hi: values[i],
                });
                break;
            }
        }
        let at = g(x);
        let below = shifted(x, -ONTO_REACH);
        let above = shifted(x, ONTO_REACH);
        if !(above >= at + 1.0 && below <= at - 1.0) {
            witnesses.push(SistrWitness::Bounded {
                probe: k,
                reach: ONTO_REACH,
                value_below: below,
                value_at: at,
                value_above: above,
            });
        }
    }
    Ok(SistrReport { passed: witnesses.is_empty(), witnesses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn mean_of_constant_vector() {
        for d in 1..6 {
            let f = RateFunction::mean(d).unwrap();
            assert!(close(f.eval(&vec![2.5; d]).unwrap(), 2.5, 1e-15));
        }
    }

    #[test]
    fn max_over_all() {
        let f = RateFunction::max_over(0.0, 1.0, vec![0, 1, 2], 3).unwrap();
        assert_eq!(f.eval(&[1.0, -2.0, 3.0]).unwrap(), 3.0);
        let g = RateFunction::min_over(1.0, 2.0, vec![0, 1], 3).unwrap();
        assert_eq!(g.eval(&[1.0, -2.0, 3.0]).unwrap(), -3.0);
    }

    #[test]
    fn example_2d_first_region() {
        // x = 1·(1,-1) + 0.25·(1,1)
        let x = [1.25, -0.75];
        let expected = 0.5 * (1.0 - (-1.0f64).exp() / 2.0);
        assert!(close(RateFunction::Example2D.eval(&x).unwrap(), expected, 1e-15));
    }

    #[test]
    fn example_2d_limit_flat_segment() {
        // x̄ = 2·(1,-1) shifted by c = 1.5 lands in the second region
        let x = [2.0 + 1.5, -2.0 + 1.5];
        assert!(close(RateFunction::Example2D.eval_scaling_limit(&x).unwrap(), 2.0, 1e-15));
    }

    #[test]
    fn example_2d_is_continuous_across_regions() {
        let f = RateFunction::Example2D;
        for &xa in &[0.0, 0.3, 1.0, 4.0] {
            for &xc in &[0.0, xa / 2.0, xa] {
                let at = |a: f64, c: f64| f.value(&[a + c, c - a]);
                for eps in [1e-9, -1e-9] {
                    assert!(close(at(xa, xc), at(xa, xc + eps), 1e-8));
                    assert!(close(
                        f.limit_value(&[xa + xc, xc - xa]),
                        f.limit_value(&[xa + xc + eps, xc + eps - xa]),
                        1e-8
                    ));
                }
            }
        }
    }

    #[test]
    fn limits_vanish_at_origin() {
        for f in family(3) {
            assert_eq!(f.eval_scaling_limit(&vec![0.0; f.dim()]).unwrap(), 0.0);
        }
        assert_eq!(RateFunction::Example2D.eval_scaling_limit(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn affine_limit_drops_bias() {
        let f = RateFunction::affine(7.0, vec![1.0, 2.0, -0.5]).unwrap();
        let x = [0.3, -1.0, 2.0];
        assert!(close(f.eval_scaling_limit(&x).unwrap(), 0.3 - 2.0 - 1.0, 1e-15));
    }

    #[test]
    fn dimension_mismatch_is_domain_error() {
        let f = RateFunction::mean(3).unwrap();
        assert!(matches!(f.eval(&[1.0]), Err(Error::Domain(_))));
        assert!(matches!(f.eval_scaling_limit(&[1.0]), Err(Error::Domain(_))));
        assert!(matches!(f.solve_translation(&[1.0], 0.0, 1e-10), Err(Error::Domain(_))));
    }

    #[test]
    fn validation_rejects_bad_members() {
        assert!(RateFunction::affine(0.0, vec![1.0, -1.0]).is_err());
        assert!(RateFunction::affine(0.0, vec![]).is_err());
        assert!(RateFunction::max_over(0.0, 0.0, vec![0], 1).is_err());
        assert!(RateFunction::max_over(0.0, 1.0, vec![], 1).is_err());
        assert!(RateFunction::max_over(0.0, 1.0, vec![2], 2).is_err());
        assert!(RateFunction::min_over(0.0, 1.0, vec![0, 0], 2).is_err());
        let a = RateFunction::mean(2).unwrap();
        let b = RateFunction::mean(3).unwrap();
        assert!(RateFunction::composite(Combinator::Max, vec![a.clone(), b]).is_err());
        assert!(RateFunction::composite(Combinator::WeightedSum { weights: vec![1.0] }, vec![a.clone(), a.clone()])
            .is_err());
        assert!(
            RateFunction::composite(Combinator::WeightedSum { weights: vec![1.0, 0.0] }, vec![a.clone(), a]).is_err()
        );
    }

    #[test]
    fn translation_affine() {
        let f = RateFunction::affine(0.0, vec![0.5, 1.0, 1.5]).unwrap();
        let c = f.solve_translation(&[0.0; 3], 3.0, 1e-10).unwrap();
        assert!(close(c, 1.0, 1e-10));
    }

    #[test]
    fn translation_example_2d_origin() {
        let c = RateFunction::Example2D.solve_translation(&[0.0, 0.0], 5.0, 1e-10).unwrap();
        assert!(close(c, 5.0, 1e-10));
    }

    #[test]
    fn translation_max_with_bias() {
        let f = RateFunction::max_over(2.0, 1.0, vec![0, 1], 2).unwrap();
        let c = f.solve_translation(&[1.0, 0.0], 0.0, 1e-10).unwrap();
        assert!(close(c, -3.0, 1e-10));
    }

    #[test]
    fn translation_fails_for_constant_function() {
        let f = RateFunction::Affine { bias: 1.0, weights: vec![0.0, 0.0] };
        assert!(matches!(f.solve_translation(&[0.0, 0.0], 5.0, 1e-10), Err(Error::ContractViolation(_))));
        assert!(matches!(f.solve_translation(&[0.0, 0.0], -5.0, 1e-10), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn sistr_report_affine_passes() {
        let f = RateFunction::affine(1.0, vec![0.2, 0.3]).unwrap();
        let probes = vec![vec![0.0, 0.0], vec![3.0, -7.0], vec![-1e3, 1e3]];
        let grid: Vec<f64> = (-10..=10).map(f64::from).collect();
        assert!(check_sistr(&f, &probes, &grid).unwrap().passed);
    }

    #[test]
    fn sistr_report_zero_weights_fails() {
        let f = RateFunction::Affine { bias: 0.0, weights: vec![0.0, 0.0] };
        let report = check_sistr(&f, &[vec![1.0, 2.0]], &[0.0, 1.0, 2.0]).unwrap();
        assert!(!report.passed);
        assert!(matches!(report.witnesses[0], SistrWitness::NotIncreasing { probe: 0, .. }));
        assert!(matches!(report.witnesses[1], SistrWitness::Bounded { probe: 0, .. }));
    }

    #[test]
    fn example_2d_limit_not_sistr_off_origin() {
        let grid: Vec<f64> = (0..=30).map(|k| 0.1 * f64::from(k)).collect();
        let f = RateFunction::Example2D;
        let report = check_sistr_scaling_limit(&f, &[vec![2.0, -2.0]], &grid).unwrap();
        assert!(!report.passed);
        match report.witnesses[0] {
            SistrWitness::NotIncreasing { c_lo, c_hi, .. } => assert!(c_lo >= 1.0 - 1e-12 && c_hi <= 2.0 + 1e-12),
            ref w => panic!("unexpected witness {w:?}"),
        }
        assert!(check_sistr_scaling_limit(&f, &[vec![0.0, 0.0]], &grid).unwrap().passed);
        assert!(check_sistr(&f, &[vec![2.0, -2.0], vec![0.0, 0.0]], &grid).unwrap().passed);
    }

    #[test]
    fn sistr_rejects_unsorted_grid() {
        let f = RateFunction::mean(1).unwrap();
        assert!(check_sistr(&f, &[vec![0.0]], &[1.0, 1.0]).is_err());
    }

    /// Members of every family with dimension `d`.
    fn family(d: usize) -> Vec<RateFunction> {
        let all: Vec<usize> = (0..d).collect();
        let affine = RateFunction::affine(0.7, (0..d).map(|i| 1.0 - 0.3 * i as f64 + 0.2).collect())
            .unwrap_or_else(|_| RateFunction::mean(d).unwrap());
        let max = RateFunction::max_over(-1.5, 2.0, all.clone(), d).unwrap();
        let min = RateFunction::min_over(3.0, 0.5, vec![d - 1], d).unwrap();
        let mean = RateFunction::mean(d).unwrap();
        vec![
            affine.clone(),
            max.clone(),
            min.clone(),
            RateFunction::composite(Combinator::Max, vec![max.clone(), mean.clone()]).unwrap(),
            RateFunction::composite(Combinator::Min, vec![min.clone(), affine.clone()]).unwrap(),
            RateFunction::composite(Combinator::WeightedSum { weights: vec![0.25, 2.0] }, vec![min, max]).unwrap(),
        ]
    }

    fn random_point(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-radius..radius)).collect()
    }

    #[test]
    fn lipschitz_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=6 {
            let mut fs = family(d);
            if d == 2 {
                fs.push(RateFunction::Example2D);
            }
            for f in fs {
                let l = f.lipschitz_bound();
                for _ in 0..1000 {
                    let x = random_point(&mut rng, d, 10.0);
                    let y = random_point(&mut rng, d, 10.0);
                    let dist = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    let gap = (f.value(&x) - f.value(&y)).abs();
                    assert!(gap <= l * dist * (1.0 + 1e-12) + 1e-12, "{f:?}: {gap} > {l}·{dist}");
                    let gap_limit = (f.limit_value(&x) - f.limit_value(&y)).abs();
                    assert!(gap_limit <= l * dist * (1.0 + 1e-12) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn limits_are_positively_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for d in 1..=6 {
            let mut fs = family(d);
            if d == 2 {
                fs.push(RateFunction::Example2D);
            }
            for f in fs {
                for _ in 0..100 {
                    let x = random_point(&mut rng, d, 5.0);
                    let base = f.limit_value(&x);
                    for c in [0.0, 0.5, 2.0, 10.0] {
                        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
                        assert!(close(f.limit_value(&cx), c * base, 1e-12 * (1.0 + base.abs() * c)));
                    }
                }
            }
        }
    }

    #[test]
    fn scaling_error_shrinks_on_unit_grid() {
        let grid: Vec<Vec<f64>> = {
            let ticks = [-1.0, -0.5, 0.0, 0.5, 1.0];
            let mut pts = Vec::new();
            for &a in &ticks {
                for &b in &ticks {
                    for &c in &ticks {
                        pts.push(vec![a, b, c]);
                    }
                }
            }
            pts
        };
        for f in family(3) {
            let mut previous = f64::INFINITY;
            for k in 1..=20 {
                let c = f64::from(1u32 << k);
                let err = grid
                    .iter()
                    .map(|x| {
                        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
                        (f.value(&cx) / c - f.limit_value(x)).abs()
                    })
                    .fold(0.0, f64::max);
                assert!(err <= previous * (1.0 + 1e-9) + 1e-15, "{f:?} at 2^{k}: {err} > {previous}");
                previous = err;
            }
            assert!(previous <= 1e-3);
        }
    }

    #[test]
    fn translation_map_has_no_jumps() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut fs = family(2);
        fs.push(RateFunction::Example2D);
        for f in fs {
            for _ in 0..50 {
                let x = random_point(&mut rng, 2, 3.0);
                let level = rng.random_range(-5.0..5.0);
                let c = f.solve_translation(&x, level, TRANSLATION_TOLERANCE).unwrap();
                for i in 0..2 {
                    let mut y = x.clone();
                    y[i] += 1e-4;
                    let c2 = f.solve_translation(&y, level, TRANSLATION_TOLERANCE).unwrap();
                    assert!((c - c2).abs() <= 1e-1);
                }
            }
        }
    }

    /// Smallest `c ≥ 0` with `min{f(x+c) − f(x), f(x) − f(x−c)} ≥ δ`.
    fn epsilon_x_delta(f: &RateFunction, x: &[f64], delta: f64) -> f64 {
        let gap = |c: f64| {
            let up: Vec<f64> = x.iter().map(|v| v + c).collect();
            let down: Vec<f64> = x.iter().map(|v| v - c).collect();
            let fx = f.value(x);
            (f.value(&up) - fx).min(fx - f.value(&down))
        };
        let mut hi = 1.0;
        while gap(hi) < delta {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) >= delta {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    #[test]
    fn epsilon_x_delta_matches_translation_slope() {
        // f(x + c) = f(x) + u c for affine f with Σθ = u
        let f = RateFunction::affine(1.0, vec![0.25, 0.25, 0.5]).unwrap();
        assert!(close(epsilon_x_delta(&f, &[0.3, 2.0, -1.0], 0.5), 0.5, 1e-9));
        // Example2D at the origin translates with slope one
        assert!(close(epsilon_x_delta(&RateFunction::Example2D, &[0.0, 0.0], 0.25), 0.25, 1e-9));
        // and stays positive for every δ > 0 off the origin
        for delta in [1e-3, 1e-1, 1.0] {
            let e = epsilon_x_delta(&RateFunction::Example2D, &[2.0, -2.0], delta);
            assert!(e > 0.0 && e.is_finite());
        }
    }

    #[test]
    fn reference_pair_is_translation_invariant() {
        let f = RateFunction::ReferencePair {
            pair: 0,
            num_actions: 1,
            dim: 2,
            reward: 3.0,
            holding: 2.0,
            successors: vec![(1, 1.0)],
        };
        f.validate().unwrap();
        assert!(!f.is_sistr_by_construction());
        assert!(close(f.value(&[1.0, 5.0]), (3.0 + 5.0 - 1.0) / 2.0, 1e-15));
        assert!(close(f.value(&[11.0, 15.0]), f.value(&[1.0, 5.0]), 1e-12));
        assert!(matches!(f.solve_translation(&[0.0, 0.0], 100.0, 1e-10), Err(Error::ContractViolation(_))));
        assert_eq!(f.lipschitz_bound(), 1.0);
    }

    proptest! {
        #[test]
        fn translation_solution_hits_level(
            x in prop::collection::vec(-100.0f64..100.0, 3),
            level in -1e3f64..1e3,
            which in 0usize..6,
        ) {
            let f = &family(3)[which];
            let c = f.solve_translation(&x, level, TRANSLATION_TOLERANCE).unwrap();
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            prop_assert!((f.value(&shifted) - level).abs() <= TRANSLATION_TOLERANCE);
        }

        #[test]
        fn serde_round_trip(which in 0usize..6, d in 1usize..5) {
            let f = &family(d)[which];
            let text = serde_json::to_string(f).unwrap();
            let back: RateFunction = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(&back, f);
        }
    }

    #[test]
    fn json_schema_shape() {
        let f: RateFunction = serde_json::from_str(
            r#"{"kind": "composite", "combinator": {"weighted_sum": {"weights": [1, 2]}},
                "children": [{"kind": "affine", "bias": 0, "weights": [1, 0]},
                             {"kind": "max_over_subset", "bias": 1, "scale": 1, "subset": [1], "dim": 2}]}"#,
        )
        .unwrap();
        f.validate().unwrap();
        assert_eq!(f.eval(&[1.0, 2.0]).unwrap(), 1.0 + 2.0 * 3.0);
        let g: RateFunction = serde_json::from_str(r#"{"kind": "example_2d"}"#).unwrap();
        assert_eq!(g, RateFunction::Example2D);
    }
}
