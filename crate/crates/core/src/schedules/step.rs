use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A deterministic stepsize sequence indexed by the per-component update
/// count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    /// `1 / (A n)`, with `1 / A` at `n = 0`.
    Class1 {
        #[serde(rename = "A")]
        a: f64,
    },
    /// `1 / (A n ln n)`, with `1 / A` where the denominator vanishes.
    Class2 {
        #[serde(rename = "A")]
        a: f64,
    },
    /// `min(1, ς · base_n)`.
    ScaledCopy { base: Box<StepSchedule>, factor: f64 },
    /// `1 / (B max(n,1)^b)`.
    PowerLaw {
        #[serde(rename = "B")]
        scale: f64,
        #[serde(rename = "b")]
        exponent: f64,
    },
    /// `1 / (B n (ln n)^b)`, with `1 / B` for `n ≤ 1`.
    LogPower {
        #[serde(rename = "B")]
        scale: f64,
        #[serde(rename = "b")]
        exponent: f64,
    },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be finite and positive, got {v}")))
            }
        };
        match self {
            StepSchedule::Class1 { a } | StepSchedule::Class2 { a } => positive("A", *a),
            StepSchedule::ScaledCopy { base, factor } => {
                positive("factor", *factor)?;
                base.validate()
            }
            StepSchedule::PowerLaw { scale, exponent } | StepSchedule::LogPower { scale, exponent } => {
                positive("B", *scale)?;
                if exponent.is_finite() && *exponent >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("exponent must be finite and ≥ 0, got {exponent}")))
                }
            }
        }
    }

    /// Stepsize class (1 or 2) when the schedule is one of the two
    /// admissible families for `α`.
    pub fn class(&self) -> Option<u8> {
        match self {
            StepSchedule::Class1 { .. } => Some(1),
            StepSchedule::Class2 { .. } => Some(2),
            _ => None,
        }
    }

    pub fn value(&self, n: u64) -> f64 {
        match self {
            StepSchedule::Class1 { a } => {
                if n == 0 {
                    1.0 / a
                } else {
                    1.0 / (a * n as f64)
                }
            }
            StepSchedule::Class2 { a } => {
                if n <= 1 {
                    1.0 / a
                } else {
                    let n = n as f64;
                    1.0 / (a * n * n.ln())
                }
            }
            StepSchedule::ScaledCopy { base, factor } => (factor * base.value(n)).min(1.0),
            StepSchedule::PowerLaw { scale, exponent } => 1.0 / (scale * (n.max(1) as f64).powf(*exponent)),
            StepSchedule::LogPower { scale, exponent } => {
                if n <= 1 {
                    1.0 / scale
                } else {
                    let n = n as f64;
                    1.0 / (scale * n * n.ln().powf(*exponent))
                }
            }
        }
    }

    /// `α_n` as used for the `Q` update.
    pub fn alpha(&self, n: u64) -> f64 {
        self.value(n)
    }

    /// `β_n` clipped to `[0, 1]`.
    pub fn beta(&self, n: u64) -> f64 {
        self.value(n).clamp(0.0, 1.0)
    }

    /// `ℓ = limsup ln(α_n) / Σ_{k≤n} α_k`, in closed form.
    pub fn decay_exponent(&self) -> f64 {
        match self {
            StepSchedule::Class1 { a } => -a,
            StepSchedule::Class2 { .. } => f64::NEG_INFINITY,
            StepSchedule::ScaledCopy { base, factor } => base.decay_exponent() / factor,
            StepSchedule::PowerLaw { scale, exponent } => {
                if *exponent < 1.0 {
                    0.0
                } else if *exponent == 1.0 {
                    -scale
                } else {
                    f64::NEG_INFINITY
                }
            }
            StepSchedule::LogPower { scale, exponent } => {
                if *exponent == 0.0 {
                    -scale
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// Floor `η_n` applied to holding-time estimates in the `Q` update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FloorSchedule {
    /// `1 / ln(n + e)`.
    #[default]
    InverseLog,
    Constant {
        value: f64,
    },
}

impl FloorSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            FloorSchedule::InverseLog => Ok(()),
            FloorSchedule::Constant { value } if value.is_finite() && *value > 0.0 => Ok(()),
            FloorSchedule::Constant { value } => Err(Error::Parameter(format!("eta must be positive, got {value}"))),
        }
    }

    pub fn value(&self, n: u64) -> f64 {
        match self {
            FloorSchedule::InverseLog => 1.0 / (n as f64 + std::f64::consts::E).ln(),
            FloorSchedule::Constant { value } => *value,
        }
    }
}
