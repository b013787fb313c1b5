use crate::error::{Error, Result};
use crate::rate::RateFunction;
use crate::smdp::{state_maxima, sup_norm, QTable, SmdpModel};

/// `T(q)(s,a) = ᾱ r_sa / t_sa + (ᾱ / t_sa) Σ p max q + (1 − ᾱ / t_sa) q(s,a)`
/// for a fixed `ᾱ ∈ (0, t_min]`.
#[derive(Clone, Debug)]
pub struct ShiftedOperator<'m> {
    model: &'m SmdpModel,
    alpha_bar: f64,
    ratio: Vec<f64>,
    reward_term: Vec<f64>,
}

impl<'m> ShiftedOperator<'m> {
    pub fn new(model: &'m SmdpModel, alpha_bar: f64) -> Result<Self> {
        let t_min = model.t_min();
        if !(alpha_bar > 0.0 && alpha_bar <= t_min) {
            return Err(Error::Parameter(format!("alpha_bar = {alpha_bar} outside (0, t_min = {t_min}]")));
        }
        let ratio: Vec<f64> = model.holdings().iter().map(|t| alpha_bar / t).collect();
        let reward_term = model.rewards().iter().zip(model.holdings()).map(|(r, t)| alpha_bar * r / t).collect();
        Ok(ShiftedOperator { model, alpha_bar, ratio, reward_term })
    }

    /// The operator at `ᾱ = t_min`.
    pub fn at_t_min(model: &'m SmdpModel) -> Result<Self> {
        Self::new(model, model.t_min())
    }

    pub fn model(&self) -> &'m SmdpModel {
        self.model
    }

    pub fn alpha_bar(&self) -> f64 {
        self.alpha_bar
    }

    pub fn dim(&self) -> usize {
        self.model.num_pairs()
    }

    fn check(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::Domain(format!("q has {} entries, model has {} pairs", q.len(), self.dim())));
        }
        Ok(())
    }

    fn apply_into(&self, q: &[f64], with_rewards: bool, out: &mut [f64]) {
        let na = self.model.num_actions();
        let maxima = state_maxima(q, na);
        for (i, out_i) in out.iter_mut().enumerate() {
            let next: f64 = self.model.successors(i).iter().map(|&(s, p)| p * maxima[s]).sum();
            let reward = if with_rewards { self.reward_term[i] } else { 0.0 };
            *out_i = reward + self.ratio[i] * next + (1.0 - self.ratio[i]) * q[i];
        }
    }

    pub fn apply(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check(q)?;
        let mut out = vec![0.0; q.len()];
        self.apply_into(q, true, &mut out);
        Ok(out)
    }

    /// `T°`: the operator of the same model with all rewards set to zero.
    pub fn apply_zero_reward(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check(q)?;
        let mut out = vec![0.0; q.len()];
        self.apply_into(q, false, &mut out);
        Ok(out)
    }

    /// `h(q) = T(q) − q − ᾱ f(q)`.
    pub fn h(&self, f: &RateFunction, q: &[f64]) -> Result<Vec<f64>> {
        let offset = self.alpha_bar * f.eval(q)?;
        let mut out = self.apply(q)?;
        for (o, x) in out.iter_mut().zip(q) {
            *o = *o - x - offset;
        }
        Ok(out)
    }

    /// `h′(q) = T(q) − q − ᾱ r*`.
    pub fn h_prime(&self, q: &[f64], rstar: f64) -> Result<Vec<f64>> {
        let offset = self.alpha_bar * rstar;
        let mut out = self.apply(q)?;
        for (o, x) in out.iter_mut().zip(q) {
            *o = *o - x - offset;
        }
        Ok(out)
    }

    /// `h∞(q) = T°(q) − q − ᾱ f∞(q)`.
    pub fn h_infinity(&self, f: &RateFunction, q: &[f64]) -> Result<Vec<f64>> {
        let offset = self.alpha_bar * f.eval_scaling_limit(q)?;
        let mut out = self.apply_zero_reward(q)?;
        for (o, x) in out.iter_mut().zip(q) {
            *o = *o - x - offset;
        }
        Ok(out)
    }

    /// `‖h′(q)‖∞`.
    pub fn aoe_residual(&self, q: &[f64], rstar: f64) -> Result<f64> {
        Ok(sup_norm(&self.h_prime(q, rstar)?))
    }
}

pub fn operator_t(model: &SmdpModel, q: &QTable, alpha_bar: f64) -> Result<QTable> {
    let op = ShiftedOperator::new(model, alpha_bar)?;
    QTable::from_vec(model.num_actions(), op.apply(q)?)
}

pub fn h_eval(model: &SmdpModel, f: &RateFunction, q: &QTable, alpha_bar: f64) -> Result<Vec<f64>> {
    ShiftedOperator::new(model, alpha_bar)?.h(f, q)
}

pub fn h_prime_eval(model: &SmdpModel, q: &QTable, rstar: f64, alpha_bar: f64) -> Result<Vec<f64>> {
    ShiftedOperator::new(model, alpha_bar)?.h_prime(q, rstar)
}

pub fn h_infinity_eval(model: &SmdpModel, f: &RateFunction, q: &QTable, alpha_bar: f64) -> Result<Vec<f64>> {
    ShiftedOperator::new(model, alpha_bar)?.h_infinity(f, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smdp::{sup_distance, TransitionLaw};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wc3() -> SmdpModel {
        let d = TransitionLaw::deterministic;
        SmdpModel::new(
            3,
            2,
            vec![d(0, 1.0, 1.0), d(1, 1.0, 1.0), d(1, 1.0, 1.0), d(0, 1.0, 1.0), d(0, 1.0, 0.0), d(0, 1.0, 0.0)],
        )
        .unwrap()
    }

    fn mixed() -> SmdpModel {
        use crate::smdp::{Branch, HoldingTimeDist, RewardDist};
        let law = |a: usize, b: usize, t: f64, r: f64| {
            TransitionLaw::new(vec![
                Branch::new(
                    0.3,
                    a,
                    HoldingTimeDist::Exponential { rate: 1.0 / t },
                    RewardDist::Gaussian { mean: r, stddev: 1.0 },
                ),
                Branch::new(
                    0.7,
                    b,
                    HoldingTimeDist::Deterministic { value: t },
                    RewardDist::Deterministic { value: r },
                ),
            ])
        };
        SmdpModel::new(
            3,
            2,
            vec![
                law(0, 1, 1.5, 2.0),
                law(2, 2, 0.5, -1.0),
                law(1, 0, 2.0, 0.5),
                law(0, 2, 1.0, 3.0),
                law(2, 1, 0.8, 0.0),
                law(1, 1, 3.0, 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_rewards_fix_constants() {
        let model = wc3().with_zero_rewards();
        let q = QTable::from_vec(2, vec![4.2; 6]).unwrap();
        assert_eq!(operator_t(&model, &q, 1.0).unwrap().into_vec(), vec![4.2; 6]);
    }

    #[test]
    fn single_pair_formula() {
        let model = SmdpModel::new(1, 1, vec![TransitionLaw::deterministic(0, 1.0, 5.0)]).unwrap();
        let q = QTable::zeros(1, 1);
        assert_eq!(operator_t(&model, &q, 1.0).unwrap().into_vec(), vec![5.0]);
    }

    #[test]
    fn wc3_at_zero_is_scaled_reward() {
        let model = wc3();
        let t_min = model.t_min();
        let out = operator_t(&model, &QTable::for_model(&model), t_min).unwrap();
        for i in 0..6 {
            assert_eq!(out[i], t_min * model.expected_reward(i) / model.expected_holding(i));
        }
    }

    #[test]
    fn alpha_bar_range() {
        let model = mixed();
        let q = QTable::for_model(&model);
        assert!(operator_t(&model, &q, 0.0).is_err());
        assert!(operator_t(&model, &q, model.t_min() * 1.0001).is_err());
        assert!(operator_t(&model, &q, model.t_min()).is_ok());
        assert!(matches!(ShiftedOperator::at_t_min(&model).unwrap().apply(&[0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn h_infinity_vanishes_at_origin() {
        let model = mixed();
        let f = RateFunction::mean(6).unwrap();
        let h = h_infinity_eval(&model, &f, &QTable::for_model(&model), model.t_min()).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn h_prime_ignores_translation() {
        let model = mixed();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q: Vec<f64> = (0..6).map(|_| rng.random_range(-4.0..4.0)).collect();
        let shifted: Vec<f64> = q.iter().map(|v| v + 3.7).collect();
        let op = ShiftedOperator::at_t_min(&model).unwrap();
        let a = op.h_prime(&q, 0.8).unwrap();
        let b = op.h_prime(&shifted, 0.8).unwrap();
        assert!(sup_distance(&a, &b) <= 1e-12);
    }

    #[test]
    fn nonexpansive_and_translation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for model in [wc3(), mixed()] {
            let op = ShiftedOperator::at_t_min(&model).unwrap();
            for _ in 0..1000 {
                let q: Vec<f64> = (0..6).map(|_| rng.random_range(-10.0..10.0)).collect();
                let p: Vec<f64> = (0..6).map(|_| rng.random_range(-10.0..10.0)).collect();
                let c = rng.random_range(-10.0..10.0);
                let tq = op.apply(&q).unwrap();
                let tp = op.apply(&p).unwrap();
                assert!(sup_distance(&tq, &tp) <= sup_distance(&q, &p) + 1e-12);
                let qc: Vec<f64> = q.iter().map(|v| v + c).collect();
                let tqc = op.apply(&qc).unwrap();
                for i in 0..6 {
                    assert!((tqc[i] - tq[i] - c).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn scaled_h_approaches_h_infinity() {
        let model = mixed();
        let op = ShiftedOperator::at_t_min(&model).unwrap();
        let fs = [
            RateFunction::affine(2.0, vec![0.1, 0.2, 0.1, 0.3, 0.2, 0.1]).unwrap(),
            RateFunction::max_over(-1.0, 1.5, vec![0, 3, 5], 6).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid: Vec<Vec<f64>> = (0..64).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        for f in &fs {
            let mut previous = f64::INFINITY;
            for k in 0..=20 {
                let c = f64::from(1u32 << k);
                let err = grid
                    .iter()
                    .map(|q| {
                        let cq: Vec<f64> = q.iter().map(|v| c * v).collect();
                        let hc: Vec<f64> = op.h(f, &cq).unwrap().iter().map(|v| v / c).collect();
                        sup_distance(&hc, &op.h_infinity(f, q).unwrap())
                    })
                    .fold(0.0, f64::max);
                assert!(err <= previous * (1.0 + 1e-9) + 1e-15);
                previous = err;
            }
            assert!(previous <= 1e-3);
        }
    }
}
