//! Bounded score functions: deviance scores for the modified-likelihood loss
//! and the Huber score for the robust quasi-likelihood.

use crate::error::{GplmError, Result};

/// Nondecreasing score applied to the unit deviance in the modified
/// likelihood loss.
///
/// The two bounded variants level off beyond the tuning constant `c`; the
/// identity variant reproduces maximum-likelihood behavior and is kept for
/// classical reductions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScorePhi {
    /// `phi(t) = t - t^2/(2c)` for `t <= c`, constant `c/2` beyond.
    BiancoYohai { c: f64 },
    /// `phi(t) = t exp(-sqrt(c))` for `t <= c`,
    /// `-2 (1 + sqrt(t)) exp(-sqrt(t)) + (2 (1 + sqrt(c)) + c) exp(-sqrt(c))` beyond.
    CrouxHaesbroeck { c: f64 },
    Identity,
}

impl ScorePhi {
    pub fn bianco_yohai(c: f64) -> Result<Self> {
        check_tuning(c)?;
        Ok(ScorePhi::BiancoYohai { c })
    }

    pub fn croux_haesbroeck(c: f64) -> Result<Self> {
        check_tuning(c)?;
        Ok(ScorePhi::CrouxHaesbroeck { c })
    }

    fn check_domain(d: f64) -> Result<()> {
        if d >= 0.0 && d.is_finite() {
            Ok(())
        } else {
            Err(GplmError::Domain {
                what: "deviance score argument",
                value: d,
            })
        }
    }

    /// Score value at deviance `d >= 0`.
    pub fn eval(&self, d: f64) -> Result<f64> {
        Self::check_domain(d)?;
        Ok(self.eval_unchecked(d))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, d: f64) -> f64 {
        match *self {
            ScorePhi::BiancoYohai { c } => {
                if d <= c {
                    d - d * d / (2.0 * c)
                } else {
                    0.5 * c
                }
            }
            ScorePhi::CrouxHaesbroeck { c } => {
                let ec = (-c.sqrt()).exp();
                if d <= c {
                    d * ec
                } else {
                    let rd = d.sqrt();
                    -2.0 * (1.0 + rd) * (-rd).exp() + (2.0 * (1.0 + c.sqrt()) + c) * ec
                }
            }
            ScorePhi::Identity => d,
        }
    }

    /// Derivative of the score in `d`.
    pub fn deriv(&self, d: f64) -> Result<f64> {
        Self::check_domain(d)?;
        Ok(self.deriv_unchecked(d))
    }

    #[inline]
    pub(crate) fn deriv_unchecked(&self, d: f64) -> f64 {
        match *self {
            ScorePhi::BiancoYohai { c } => {
                if d <= c {
                    1.0 - d / c
                } else {
                    0.0
                }
            }
            ScorePhi::CrouxHaesbroeck { c } => {
                if d <= c {
                    (-c.sqrt()).exp()
                } else {
                    (-d.sqrt()).exp()
                }
            }
            ScorePhi::Identity => 1.0,
        }
    }

    /// Second derivative; left-branch convention at the junction `d = c`.
    #[inline]
    pub(crate) fn deriv2_unchecked(&self, d: f64) -> f64 {
        match *self {
            ScorePhi::BiancoYohai { c } => {
                if d <= c {
                    -1.0 / c
                } else {
                    0.0
                }
            }
            ScorePhi::CrouxHaesbroeck { c } => {
                if d <= c {
                    0.0
                } else {
                    let rd = d.sqrt();
                    -(-rd).exp() / (2.0 * rd)
                }
            }
            ScorePhi::Identity => 0.0,
        }
    }

    /// Supremum of the score over `d >= 0` (infinite for the identity).
    pub fn sup(&self) -> f64 {
        match *self {
            ScorePhi::BiancoYohai { c } => 0.5 * c,
            ScorePhi::CrouxHaesbroeck { c } => (2.0 * (1.0 + c.sqrt()) + c) * (-c.sqrt()).exp(),
            ScorePhi::Identity => f64::INFINITY,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ScorePhi::BiancoYohai { c } => format!("by({c})"),
            ScorePhi::CrouxHaesbroeck { c } => format!("ch({c})"),
            ScorePhi::Identity => "identity".to_string(),
        }
    }
}

/// Huber score `psi_c(x) = max(-c, min(c, x))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiHuber {
    pub c: f64,
}

impl PsiHuber {
    /// Default tuning constant for the robust quasi-likelihood.
    pub const DEFAULT_C: f64 = 1.2;

    pub fn new(c: f64) -> Result<Self> {
        check_tuning(c)?;
        Ok(PsiHuber { c })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        x.clamp(-self.c, self.c)
    }

    /// Derivative with the left-derivative convention at the kinks.
    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        if x > -self.c && x <= self.c {
            1.0
        } else {
            0.0
        }
    }
}

fn check_tuning(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(GplmError::InvalidSpec(format!(
            "tuning constant must be positive, got {c}"
        )))
    }
}
