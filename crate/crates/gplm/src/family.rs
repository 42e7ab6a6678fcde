//! Exponential-family response distributions.
//!
//! The distribution of `y` is parameterized throughout by the *mean
//! parameter* `s`: the success probability for the binomial family (counts
//! live on `{0, ..., m}` with mean `m s`) and the mean itself for the Poisson
//! family. The link maps the linear predictor to `s`.

use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

use crate::error::{GplmError, Result};

/// Tail mass left outside truncated Poisson support sums.
const POISSON_TAIL: f64 = 1e-12;
/// Hard cap on the truncated Poisson support scan.
const POISSON_SUPPORT_CAP: u64 = 100_000;

/// `ln k!` for integer arguments, cached (log densities sit in every inner
/// loop of the local fits).
fn ln_factorial(y: f64) -> f64 {
    const CACHE_LEN: usize = 2048;
    static CACHE: OnceLock<Vec<f64>> = OnceLock::new();
    if y >= 0.0 && y < CACHE_LEN as f64 && y == y.trunc() {
        let cache = CACHE.get_or_init(|| {
            let mut v = Vec::with_capacity(CACHE_LEN);
            let mut acc = 0.0f64;
            v.push(0.0);
            for k in 1..CACHE_LEN {
                acc += (k as f64).ln();
                v.push(acc);
            }
            v
        });
        cache[y as usize]
    } else {
        ln_gamma(y + 1.0)
    }
}

/// Response family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `Bi(m, s)` counts on `{0, ..., m}`.
    Binomial { trials: u32 },
    /// Poisson counts with mean `s > 0`.
    Poisson,
}

impl Family {
    pub fn binomial(trials: u32) -> Result<Self> {
        if trials == 0 {
            return Err(GplmError::InvalidSpec(
                "binomial trial count must be positive".into(),
            ));
        }
        Ok(Family::Binomial { trials })
    }

    /// Open interval of valid mean parameters.
    pub fn mean_param_bounds(&self) -> (f64, f64) {
        match self {
            Family::Binomial { .. } => (0.0, 1.0),
            Family::Poisson => (0.0, f64::INFINITY),
        }
    }

    fn check_mean_param(&self, s: f64) -> Result<()> {
        let (lo, hi) = self.mean_param_bounds();
        if s.is_finite() && s > lo && s < hi {
            Ok(())
        } else {
            Err(GplmError::Domain {
                what: "mean parameter",
                value: s,
            })
        }
    }

    /// Checks that `y` is an integer point of the support.
    pub fn validate_response(&self, y: f64) -> Result<()> {
        let ok = y.is_finite() && y >= 0.0 && (y - y.round()).abs() < 1e-9;
        let ok = ok
            && match self {
                Family::Binomial { trials } => y.round() <= *trials as f64,
                Family::Poisson => true,
            };
        if ok {
            Ok(())
        } else {
            Err(GplmError::Domain {
                what: "response",
                value: y,
            })
        }
    }

    /// Count-scale mean `mu(s)`.
    #[inline]
    pub fn mean(&self, s: f64) -> f64 {
        match self {
            Family::Binomial { trials } => *trials as f64 * s,
            Family::Poisson => s,
        }
    }

    /// Mean parameter from the count-scale mean.
    #[inline]
    pub fn mean_param_of_mean(&self, mu: f64) -> f64 {
        match self {
            Family::Binomial { trials } => mu / *trials as f64,
            Family::Poisson => mu,
        }
    }

    /// Conditional variance `V(mu)` as a function of the count-scale mean.
    #[inline]
    pub fn variance_of_mean(&self, mu: f64) -> f64 {
        match self {
            Family::Binomial { trials } => {
                let m = *trials as f64;
                mu * (1.0 - mu / m)
            }
            Family::Poisson => mu,
        }
    }

    /// Variance as a function of the mean parameter.
    #[inline]
    pub(crate) fn variance_of_param(&self, s: f64) -> f64 {
        match self {
            Family::Binomial { trials } => *trials as f64 * s * (1.0 - s),
            Family::Poisson => s,
        }
    }

    /// Derivative of [`Family::variance_of_param`] in `s`.
    #[inline]
    pub(crate) fn variance_of_param_ds(&self, s: f64) -> f64 {
        match self {
            Family::Binomial { trials } => *trials as f64 * (1.0 - 2.0 * s),
            Family::Poisson => 1.0,
        }
    }

    /// Log density `ln f(y, s)`, with `0 ln 0 := 0` on the support boundary.
    pub(crate) fn log_density(&self, y: f64, s: f64) -> f64 {
        match self {
            Family::Binomial { trials } => {
                let m = *trials as f64;
                let mut v = ln_factorial(m) - ln_factorial(y) - ln_factorial(m - y);
                if y > 0.0 {
                    v += y * s.ln();
                }
                if y < m {
                    v += (m - y) * (1.0 - s).ln();
                }
                v
            }
            Family::Poisson => {
                let mut v = -s - ln_factorial(y);
                if y > 0.0 {
                    v += y * s.ln();
                }
                v
            }
        }
    }

    /// Score in the mean parameter, `q(y, s) = d/ds ln f(y, s)`.
    #[inline]
    pub(crate) fn score_s(&self, y: f64, s: f64) -> f64 {
        match self {
            Family::Binomial { trials } => {
                let m = *trials as f64;
                (y - m * s) / (s * (1.0 - s))
            }
            Family::Poisson => y / s - 1.0,
        }
    }

    /// `d/ds q(y, s)`.
    #[inline]
    pub(crate) fn score_s_ds(&self, y: f64, s: f64) -> f64 {
        match self {
            Family::Binomial { trials } => {
                let m = *trials as f64;
                -y / (s * s) - (m - y) / ((1.0 - s) * (1.0 - s))
            }
            Family::Poisson => -y / (s * s),
        }
    }

    /// Density `f(y, s)`.
    pub fn density(&self, y: f64, s: f64) -> Result<f64> {
        self.check_mean_param(s)?;
        self.validate_response(y)?;
        Ok(self.log_density(y, s).exp())
    }

    /// Partial derivative of the density in the mean parameter.
    pub fn density_ds(&self, y: f64, s: f64) -> Result<f64> {
        self.check_mean_param(s)?;
        self.validate_response(y)?;
        Ok(self.log_density(y, s).exp() * self.score_s(y, s))
    }

    /// Second partial derivative of the density in the mean parameter.
    pub(crate) fn density_ds2(&self, y: f64, s: f64) -> f64 {
        let f = self.log_density(y, s).exp();
        let q = self.score_s(y, s);
        f * (q * q + self.score_s_ds(y, s))
    }

    /// Pearson residual `(y - mu) / sqrt(V(mu))` on the count scale.
    pub fn pearson_residual(&self, y: f64, mu: f64) -> Result<f64> {
        let v = self.variance_of_mean(mu);
        if !(v > 0.0) || !v.is_finite() {
            return Err(GplmError::DegenerateVariance { mu });
        }
        Ok((y - mu) / v.sqrt())
    }

    /// Saturated-model log density `A(y) = ln f(y, s_sat(y))`, where the
    /// saturated mean parameter is `y/m` (binomial) or `y` (Poisson); boundary
    /// responses use the limit value.
    pub fn saturated_log_density(&self, y: f64) -> f64 {
        match self {
            Family::Binomial { trials } => {
                let m = *trials as f64;
                let mut v = ln_factorial(m) - ln_factorial(y) - ln_factorial(m - y);
                if y > 0.0 {
                    v += y * (y / m).ln();
                }
                if y < m {
                    v += (m - y) * (1.0 - y / m).ln();
                }
                v
            }
            Family::Poisson => {
                if y > 0.0 {
                    -y - ln_factorial(y) + y * y.ln()
                } else {
                    0.0
                }
            }
        }
    }

    /// Inclusive upper end of the support used for expectations at `s`.
    ///
    /// Exact (`m`) for the binomial family; for Poisson the smallest `Y` whose
    /// upper tail mass is below `1e-12`.
    pub fn support_upper(&self, s: f64) -> Result<u64> {
        self.check_mean_param(s)?;
        match self {
            Family::Binomial { trials } => Ok(*trials as u64),
            Family::Poisson => {
                let mut pmf = (-s).exp();
                let mut cum = pmf;
                let mut y = 0u64;
                while 1.0 - cum >= POISSON_TAIL {
                    y += 1;
                    if y > POISSON_SUPPORT_CAP {
                        return Err(GplmError::Precision(format!(
                            "poisson support truncation failed at mean {s}: tail mass {} above 1e-12 at cutoff {POISSON_SUPPORT_CAP}",
                            1.0 - cum
                        )));
                    }
                    pmf *= s / y as f64;
                    cum += pmf;
                }
                Ok(y)
            }
        }
    }

    /// Expectation of `g(y)` under `F(., s)` over the (truncated) support.
    pub fn expect<F: FnMut(f64) -> f64>(&self, s: f64, mut g: F) -> Result<f64> {
        let upper = self.support_upper(s)?;
        let mut total = 0.0;
        for y in 0..=upper {
            let yf = y as f64;
            total += self.log_density(yf, s).exp() * g(yf);
        }
        Ok(total)
    }

    pub fn label(&self) -> String {
        match self {
            Family::Binomial { trials } => format!("binomial({trials})"),
            Family::Poisson => "poisson".to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_density_symmetry() {
        let f = Family::Binomial { trials: 1 };
        assert!((f.density(1.0, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((f.density(0.0, 0.5).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn poisson_density_at_zero() {
        let f = Family::Poisson;
        assert!((f.density(0.0, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn binomial_normalization() {
        let f = Family::Binomial { trials: 10 };
        let total: f64 = (0..=10).map(|y| f.density(y as f64, 0.3).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_grid_all_families() {
        for fam in [
            Family::Binomial { trials: 1 },
            Family::Binomial { trials: 10 },
            Family::Poisson,
        ] {
            for k in 1..=20 {
                let s = match fam {
                    Family::Poisson => 0.4 * k as f64,
                    _ => k as f64 / 21.0,
                };
                let total = fam.expect(s, |_| 1.0).unwrap();
                assert!(
                    (total - 1.0).abs() < 1e-10,
                    "family {fam:?} s {s}: sum {total}"
                );
            }
        }
    }

    #[test]
    fn density_matches_statrs() {
        use statrs::distribution::{Binomial, Discrete, Poisson};
        let f = Family::Binomial { trials: 10 };
        let d = Binomial::new(0.37, 10).unwrap();
        for y in 0..=10u64 {
            assert!((f.density(y as f64, 0.37).unwrap() - d.pmf(y)).abs() < 1e-13);
        }
        let f = Family::Poisson;
        let d = Poisson::new(2.5).unwrap();
        for y in 0..=20u64 {
            assert!((f.density(y as f64, 2.5).unwrap() - d.pmf(y)).abs() < 1e-13);
        }
    }

    #[test]
    fn density_ds_matches_finite_difference() {
        for fam in [Family::Binomial { trials: 10 }, Family::Poisson] {
            for y in [0.0, 1.0, 4.0] {
                let s = 0.4;
                let h = 1e-6;
                let fd =
                    (fam.density(y, s + h).unwrap() - fam.density(y, s - h).unwrap()) / (2.0 * h);
                assert!((fam.density_ds(y, s).unwrap() - fd).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn pearson_examples() {
        let b = Family::Binomial { trials: 1 };
        assert_eq!(b.pearson_residual(0.5, 0.5).unwrap(), 0.0);
        assert!((b.pearson_residual(1.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        let p = Family::Poisson;
        assert!((p.pearson_residual(6.0, 4.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pearson_degenerate_variance() {
        let b = Family::Binomial { trials: 1 };
        assert!(matches!(
            b.pearson_residual(1.0, 1.0),
            Err(GplmError::DegenerateVariance { .. })
        ));
    }

    #[test]
    fn domain_errors() {
        let b = Family::Binomial { trials: 10 };
        assert!(b.density(3.0, 1.2).is_err());
        assert!(b.density(11.0, 0.4).is_err());
        assert!(Family::Poisson.density(-1.0, 2.0).is_err());
    }

    #[test]
    fn poisson_truncation_covers_tail() {
        let f = Family::Poisson;
        for s in [0.1, 1.0, 7.3, 40.0] {
            let upper = f.support_upper(s).unwrap();
            let mass: f64 = (0..=upper).map(|y| f.density(y as f64, s).unwrap()).sum();
            assert!(1.0 - mass < 1e-12, "s={s}: residual {}", 1.0 - mass);
        }
    }

    #[test]
    fn saturated_boundary_values() {
        let b = Family::Binomial { trials: 10 };
        assert_eq!(b.saturated_log_density(0.0), 0.0);
        assert_eq!(b.saturated_log_density(10.0), 0.0);
        assert_eq!(Family::Poisson.saturated_log_density(0.0), 0.0);
    }
}
