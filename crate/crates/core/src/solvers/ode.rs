use serde::Serialize;

use super::operator::ShiftedOperator;
use crate::error::{Error, Result};
use crate::rate::RateFunction;
use crate::smdp::sup_distance;

pub const DEFAULT_DT: f64 = 1e-3;

/// Vector fields of the mean-field ODEs.
#[derive(Clone, Copy, Debug)]
pub enum MeanField<'a> {
    H { op: &'a ShiftedOperator<'a>, f: &'a RateFunction },
    HPrime { op: &'a ShiftedOperator<'a>, rstar: f64 },
    HInfinity { op: &'a ShiftedOperator<'a>, f: &'a RateFunction },
}

impl MeanField<'_> {
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        match *self {
            MeanField::H { op, f } => op.h(f, x),
            MeanField::HPrime { op, rstar } => op.h_prime(x, rstar),
            MeanField::HInfinity { op, f } => op.h_infinity(f, x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(field: &mut F, x: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect() };
    let k1 = field(x)?;
    let k2 = field(&axpy(0.5 * dt, &k1))?;
    let k3 = field(&axpy(0.5 * dt, &k2))?;
    let k4 = field(&axpy(dt, &k3))?;
    Ok((0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// Integrates `ẋ = field(x)` on `[0, t_end]` with a fixed step, recording
/// every step.
pub fn integrate_with<F>(mut field: F, x0: &[f64], t_end: f64, dt: f64) -> Result<Trajectory>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::Parameter(format!("need dt > 0 and t_end ≥ 0, got dt = {dt}, t_end = {t_end}")));
    }
    let steps = (t_end / dt).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(x0.to_vec());
    for k in 1..=steps {
        let next = rk4_step(&mut field, states.last().expect("nonempty"), dt)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                n: k as u64,
                detail: format!("non-finite ODE state at t = {}", k as f64 * dt),
            });
        }
        times.push(k as f64 * dt);
        states.push(next);
    }
    Ok(Trajectory { times, states })
}

pub fn integrate_ode(field: MeanField<'_>, x0: &[f64], t_end: f64, dt: f64) -> Result<Trajectory> {
    integrate_with(|x| field.eval(x), x0, t_end, dt)
}

/// Largest `‖x(t) − y(t) − z(t)·1‖∞` on `[0, t_end]`, where `x` follows `h`,
/// `y` follows `h′` and `ż = ᾱ r* − ᾱ f(y + z·1)`, all from `x(0) = y(0)`,
/// `z(0) = 0`.
pub fn decomposition_gap(
    op: &ShiftedOperator<'_>,
    f: &RateFunction,
    rstar: f64,
    x0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    let d = x0.len();
    let alpha = op.alpha_bar();
    let x = integrate_ode(MeanField::H { op, f }, x0, t_end, dt)?;
    let mut start = x0.to_vec();
    start.push(0.0);
    let yz = integrate_with(
        |v: &[f64]| {
            let (y, z) = (&v[..d], v[d]);
            let mut out = op.h_prime(y, rstar)?;
            let shifted: Vec<f64> = y.iter().map(|yi| yi + z).collect();
            out.push(alpha * rstar - alpha * f.eval(&shifted)?);
            Ok(out)
        },
        &start,
        t_end,
        dt,
    )?;
    Ok(x.states
        .iter()
        .zip(&yz.states)
        .map(|(xs, v)| {
            let recomposed: Vec<f64> = v[..d].iter().map(|yi| yi + v[d]).collect();
            sup_distance(xs, &recomposed)
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smdp::{sup_norm, SmdpModel, TransitionLaw};

    #[test]
    fn rk4_matches_exponential_decay() {
        let traj = integrate_with(|x: &[f64]| Ok(vec![-x[0]]), &[1.0], 1.0, 1e-2).unwrap();
        assert!((traj.last()[0] - (-1.0f64).exp()).abs() < 1e-9);
        assert_eq!(traj.times.len(), 101);
    }

    #[test]
    fn blow_up_is_reported() {
        let err = integrate_with(|x: &[f64]| Ok(vec![x[0] * x[0]]), &[1.0], 5.0, 1e-2).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn origin_is_an_equilibrium_of_h_infinity() {
        let d = TransitionLaw::deterministic;
        let model = SmdpModel::new(2, 1, vec![d(1, 1.0, 4.0), d(0, 2.0, 0.0)]).unwrap();
        let op = ShiftedOperator::at_t_min(&model).unwrap();
        let f = RateFunction::mean(2).unwrap();
        let traj = integrate_ode(MeanField::HInfinity { op: &op, f: &f }, &[0.0, 0.0], 1.0, DEFAULT_DT).unwrap();
        assert_eq!(sup_norm(traj.last()), 0.0);
    }

    #[test]
    fn decomposition_holds_on_a_cycle() {
        let d = TransitionLaw::deterministic;
        let model = SmdpModel::new(2, 2, vec![d(1, 1.0, 4.0), d(0, 1.0, 1.0), d(0, 2.0, 0.0), d(1, 1.5, 1.0)]).unwrap();
        let op = ShiftedOperator::at_t_min(&model).unwrap();
        let f = RateFunction::max_over(0.5, 1.0, vec![0, 2], 4).unwrap();
        let gap = decomposition_gap(&op, &f, 1.3, &[1.0, -2.0, 0.5, 3.0], 5.0, DEFAULT_DT).unwrap();
        assert!(gap <= 1e-9, "{gap}");
    }
}
