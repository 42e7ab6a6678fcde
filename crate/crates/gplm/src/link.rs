//! Link functions mapping the linear predictor to the mean parameter.

use crate::error::{GplmError, Result};

/// Inverse link `H` with derivatives and inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    /// `H(u) = 1 / (1 + exp(-u))`, the canonical binomial link.
    Logit,
    /// `H(u) = exp(u)`, the canonical Poisson link.
    Log,
}

impl Link {
    /// Mean parameter from the linear predictor.
    #[inline]
    pub fn h(&self, u: f64) -> f64 {
        match self {
            Link::Logit => {
                if u >= 0.0 {
                    1.0 / (1.0 + (-u).exp())
                } else {
                    let e = u.exp();
                    e / (1.0 + e)
                }
            }
            Link::Log => u.exp(),
        }
    }

    /// `H'(u)`, strictly positive.
    #[inline]
    pub fn h_deriv(&self, u: f64) -> f64 {
        match self {
            Link::Logit => {
                let s = self.h(u);
                s * (1.0 - s)
            }
            Link::Log => u.exp(),
        }
    }

    /// `H''(u)`.
    #[inline]
    pub fn h_deriv2(&self, u: f64) -> f64 {
        match self {
            Link::Logit => {
                let s = self.h(u);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            Link::Log => u.exp(),
        }
    }

    /// Inverse `H^{-1}` (the link `g` itself).
    pub fn h_inv(&self, s: f64) -> Result<f64> {
        match self {
            Link::Logit => {
                if s > 0.0 && s < 1.0 {
                    Ok((s / (1.0 - s)).ln())
                } else {
                    Err(GplmError::Domain {
                        what: "logit inverse argument",
                        value: s,
                    })
                }
            }
            Link::Log => {
                if s > 0.0 {
                    Ok(s.ln())
                } else {
                    Err(GplmError::Domain {
                        what: "log inverse argument",
                        value: s,
                    })
                }
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Link::Logit => "logit",
            Link::Log => "log",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip_on_grid() {
        for link in [Link::Logit, Link::Log] {
            for k in 0..50 {
                let u = -12.0 + 24.0 * k as f64 / 49.0;
                let back = link.h_inv(link.h(u)).unwrap();
                assert!(
                    (back - u).abs() <= 1e-12 * u.abs().max(1.0),
                    "{link:?} u={u} back={back}"
                );
            }
        }
    }

    #[test]
    fn derivative_positive_and_matches_fd() {
        for link in [Link::Logit, Link::Log] {
            for k in 0..21 {
                let u = -5.0 + 0.5 * k as f64;
                assert!(link.h_deriv(u) > 0.0);
                let h = 1e-6;
                let scale = link.h_deriv(u).abs().max(1.0);
                let fd = (link.h(u + h) - link.h(u - h)) / (2.0 * h);
                assert!((link.h_deriv(u) - fd).abs() < 1e-8 * scale);
                let fd2 = (link.h_deriv(u + h) - link.h_deriv(u - h)) / (2.0 * h);
                assert!((link.h_deriv2(u) - fd2).abs() < 1e-7 * scale);
            }
        }
    }

    #[test]
    fn logit_saturates_gracefully() {
        assert!(Link::Logit.h(800.0) <= 1.0);
        assert!(Link::Logit.h(-800.0) >= 0.0);
        assert!(Link::Logit.h(-800.0).is_finite());
    }
}
