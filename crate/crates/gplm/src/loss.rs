//! Loss functions for robust estimation in generalized partially linear
//! models: `rho(y, u)` evaluated at the linear predictor `u`, its derivative
//! `Psi = d rho / d u` and second derivative `chi = d Psi / d u`.
//!
//! Two robust families are implemented alongside the classical
//! quasi-likelihood:
//!
//! * **Modified likelihood** — a bounded nondecreasing score applied to the
//!   unit deviance, `rho(y, u) = phi(-ln f(y, H(u)) + A(y)) + G(H(u))`, with
//!   `A(y)` the saturated log density.
//! * **Robust quasi-likelihood** — Pearson residuals bounded by a Huber
//!   score: `rho(y, u) = -(int_{s0}^{H(u)} nu(y, s) ds + G(H(u)))` with
//!   `nu(y, s) = psi_c(r(y, mu(s))) / sqrt(V(mu(s)))` and `nu(y, s0) = 0`.
//!
//! In both cases the correction term `G` restores conditional Fisher
//! consistency: `G'(s) = E_s[phi'(d) f'/f]` for the modified likelihood and
//! `G'(s) = -E_s[nu(y, s)]` for the quasi-likelihood form, making
//! `E_s Psi(y, H^{-1}(s)) = 0` hold exactly under the model.
//!
//! The Huber integrand is piecewise classical/constant, so the `nu` integral
//! has closed-form antiderivatives between the residual crossings; only `G`
//! needs precomputation (see [`crate::correction`]). The classical
//! quasi-likelihood reduces to half the unit deviance (scaled by the trial
//! count for binomial responses).

use crate::correction::{ch_bernoulli_raw, Correction, CorrectionTable};
use crate::error::{GplmError, Result};
use crate::family::Family;
use crate::link::Link;
use crate::numeric::bisect;
use crate::score::{PsiHuber, ScorePhi};
use crate::weight::WeightFn;

/// Chebyshev order for correction-table pieces.
const G_TABLE_ORDER: usize = 32;
/// Upper end of the tabulated Poisson mean-parameter range; `G` is extended
/// constantly beyond it.
const POISSON_G_HI: f64 = 150.0;
/// Interior clamp for the binomial success probability; the logit link
/// saturates to exactly 0/1 in floating point beyond `|u| ~ 36.7`.
const BINOM_S_CLAMP: f64 = 1e-16;

/// Which loss family drives the estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// Bounded score on deviances (with score function `phi`).
    ModifiedLikelihood(ScorePhi),
    /// Huber-bounded Pearson residuals.
    RobustQuasi(PsiHuber),
    /// Classical quasi-likelihood: identity score, unit weights, non-robust.
    ClassicalQuasi,
}

/// Full specification of a loss: kind, response family, link and the
/// covariate weights applied in the local (`w1`) and profile (`w2`) stages.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub family: Family,
    pub link: Link,
    pub w1: WeightFn,
    pub w2: WeightFn,
}

impl LossSpec {
    /// General constructor. The classical quasi-likelihood always carries
    /// unit weights.
    pub fn new(kind: LossKind, family: Family, link: Link, w1: WeightFn, w2: WeightFn) -> Self {
        match kind {
            LossKind::ClassicalQuasi => LossSpec {
                kind,
                family,
                link,
                w1: WeightFn::Unit,
                w2: WeightFn::Unit,
            },
            _ => LossSpec {
                kind,
                family,
                link,
                w1,
                w2,
            },
        }
    }

    /// Classical quasi-likelihood (QAL).
    pub fn classical(family: Family, link: Link) -> Self {
        Self::new(
            LossKind::ClassicalQuasi,
            family,
            link,
            WeightFn::Unit,
            WeightFn::Unit,
        )
    }

    /// Robust quasi-likelihood (RQL) with Huber tuning constant `c`.
    pub fn robust_quasi(family: Family, link: Link, c: f64, w1: WeightFn, w2: WeightFn) -> Result<Self> {
        Ok(Self::new(
            LossKind::RobustQuasi(PsiHuber::new(c)?),
            family,
            link,
            w1,
            w2,
        ))
    }

    /// Modified likelihood (MOD) with the given deviance score.
    pub fn modified(family: Family, link: Link, phi: ScorePhi, w1: WeightFn, w2: WeightFn) -> Self {
        Self::new(LossKind::ModifiedLikelihood(phi), family, link, w1, w2)
    }

    /// Short label used in outputs: `qal`, `rql` or `mod`.
    pub fn label(&self) -> &'static str {
        match self.kind {
            LossKind::ModifiedLikelihood(_) => "mod",
            LossKind::RobustQuasi(_) => "rql",
            LossKind::ClassicalQuasi => "qal",
        }
    }
}

/// A compiled loss: the specification plus the precomputed correction term.
#[derive(Debug, Clone)]
pub struct LossModel {
    spec: LossSpec,
    correction: Correction,
}

impl LossModel {
    pub fn new(spec: LossSpec) -> Result<Self> {
        let correction = build_correction(&spec)?;
        Ok(LossModel { spec, correction })
    }

    pub fn spec(&self) -> &LossSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn link(&self) -> Link {
        self.spec.link
    }

    pub fn label(&self) -> &'static str {
        self.spec.label()
    }

    /// Mean parameter from the predictor, clamped to the representable
    /// interior of the parameter space.
    #[inline]
    pub(crate) fn s_of_u(&self, u: f64) -> f64 {
        let s = self.spec.link.h(u);
        match self.spec.family {
            Family::Binomial { .. } => s.clamp(BINOM_S_CLAMP, 1.0 - BINOM_S_CLAMP),
            Family::Poisson => s.max(1e-300),
        }
    }

    fn check_predictor(&self, u: f64) -> Result<()> {
        if !u.is_finite() {
            return Err(GplmError::Domain {
                what: "linear predictor",
                value: u,
            });
        }
        let s = self.spec.link.h(u);
        let (lo, hi) = self.spec.family.mean_param_bounds();
        if s <= lo || s >= hi {
            return Err(GplmError::Domain {
                what: "mean parameter H(u)",
                value: s,
            });
        }
        Ok(())
    }

    // ---- loss, score and curvature ------------------------------------

    /// Loss value `rho(y, u)`.
    pub fn rho(&self, y: f64, u: f64) -> Result<f64> {
        self.spec.family.validate_response(y)?;
        self.check_predictor(u)?;
        Ok(self.rho_raw(y, u))
    }

    /// First derivative `Psi(y, u) = d rho / d u`.
    pub fn psi(&self, y: f64, u: f64) -> Result<f64> {
        self.spec.family.validate_response(y)?;
        self.check_predictor(u)?;
        Ok(self.psi_raw(y, u))
    }

    /// Second derivative `chi(y, u) = d Psi / d u` (analytic branch
    /// derivatives, left-branch convention at score kinks).
    pub fn chi(&self, y: f64, u: f64) -> Result<f64> {
        self.spec.family.validate_response(y)?;
        self.check_predictor(u)?;
        Ok(self.chi_raw(y, u))
    }

    #[inline]
    pub(crate) fn rho_raw(&self, y: f64, u: f64) -> f64 {
        let s = self.s_of_u(u);
        match &self.spec.kind {
            LossKind::ModifiedLikelihood(phi) => {
                phi.eval_unchecked(self.deviance(y, s)) + self.correction.eval(s)
            }
            LossKind::RobustQuasi(psi) => {
                -(self.nu_integral(y, s, Some(psi.c)) + self.correction.eval(s))
            }
            LossKind::ClassicalQuasi => self.deviance(y, s) / self.count_scale(),
        }
    }

    #[inline]
    pub(crate) fn psi_raw(&self, y: f64, u: f64) -> f64 {
        let s = self.s_of_u(u);
        let hd = self.spec.link.h_deriv(u);
        match &self.spec.kind {
            LossKind::ModifiedLikelihood(phi) => {
                let d = self.deviance(y, s);
                let q = self.spec.family.score_s(y, s);
                hd * (-phi.deriv_unchecked(d) * q + self.g_deriv_raw(s))
            }
            LossKind::RobustQuasi(_) => -(self.nu(y, s) + self.g_deriv_raw(s)) * hd,
            LossKind::ClassicalQuasi => -self.nu(y, s) * hd,
        }
    }

    #[inline]
    pub(crate) fn chi_raw(&self, y: f64, u: f64) -> f64 {
        let s = self.s_of_u(u);
        let hd = self.spec.link.h_deriv(u);
        let hd2 = self.spec.link.h_deriv2(u);
        match &self.spec.kind {
            LossKind::ModifiedLikelihood(phi) => {
                let d = self.deviance(y, s);
                let q = self.spec.family.score_s(y, s);
                let qd = self.spec.family.score_s_ds(y, s);
                let slope = -phi.deriv_unchecked(d) * q + self.g_deriv_raw(s);
                let curv = phi.deriv2_unchecked(d) * q * q - phi.deriv_unchecked(d) * qd
                    + self.g_deriv2_raw(s);
                hd2 * slope + hd * hd * curv
            }
            LossKind::RobustQuasi(_) => {
                let slope = -(self.nu(y, s) + self.g_deriv_raw(s));
                let curv = -(self.nu_ds(y, s) + self.g_deriv2_raw(s));
                hd2 * slope + hd * hd * curv
            }
            LossKind::ClassicalQuasi => -self.nu(y, s) * hd2 - self.nu_ds(y, s) * hd * hd,
        }
    }

    // ---- correction term ----------------------------------------------

    /// Correction `G(s)`, anchored at 0.5 (binomial probability scale) or 1.0
    /// (Poisson mean scale).
    pub fn correction_g(&self, s: f64) -> Result<f64> {
        self.check_mean_param(s)?;
        Ok(self.correction.eval(s))
    }

    /// Derivative `G'(s)` via exact (truncated) support sums.
    pub fn correction_g_deriv(&self, s: f64) -> Result<f64> {
        self.check_mean_param(s)?;
        Ok(self.g_deriv_raw(s))
    }

    fn check_mean_param(&self, s: f64) -> Result<()> {
        let (lo, hi) = self.spec.family.mean_param_bounds();
        if s.is_finite() && s > lo && s < hi {
            Ok(())
        } else {
            Err(GplmError::Domain {
                what: "mean parameter",
                value: s,
            })
        }
    }

    /// `G'(s)` (no domain checks; extreme Poisson means use a clamped
    /// support sum consistent with the constant extension of the table).
    pub(crate) fn g_deriv_raw(&self, s: f64) -> f64 {
        let s = self.clamp_to_g_domain(s);
        match &self.spec.kind {
            LossKind::ModifiedLikelihood(ScorePhi::Identity) | LossKind::ClassicalQuasi => 0.0,
            LossKind::ModifiedLikelihood(phi) => {
                let fam = self.spec.family;
                let upper = fam.support_upper(s).expect("support truncation");
                let mut total = 0.0;
                for y in 0..=upper {
                    let yf = y as f64;
                    let f = fam.log_density(yf, s).exp();
                    let q = fam.score_s(yf, s);
                    total += phi.deriv_unchecked(self.deviance(yf, s)) * f * q;
                }
                total
            }
            LossKind::RobustQuasi(_) => {
                let fam = self.spec.family;
                let upper = fam.support_upper(s).expect("support truncation");
                let mut total = 0.0;
                for y in 0..=upper {
                    let yf = y as f64;
                    total += fam.log_density(yf, s).exp() * self.nu(yf, s);
                }
                -total
            }
        }
    }

    /// `G''(s)` by differentiating the support sums term by term.
    pub(crate) fn g_deriv2_raw(&self, s: f64) -> f64 {
        let s = self.clamp_to_g_domain(s);
        match &self.spec.kind {
            LossKind::ModifiedLikelihood(ScorePhi::Identity) | LossKind::ClassicalQuasi => 0.0,
            LossKind::ModifiedLikelihood(phi) => {
                let fam = self.spec.family;
                let upper = fam.support_upper(s).expect("support truncation");
                let mut total = 0.0;
                for y in 0..=upper {
                    let yf = y as f64;
                    let f = fam.log_density(yf, s).exp();
                    let q = fam.score_s(yf, s);
                    let d = self.deviance(yf, s);
                    let fp = f * q;
                    let fpp = fam.density_ds2(yf, s);
                    total += -phi.deriv2_unchecked(d) * q * fp + phi.deriv_unchecked(d) * fpp;
                }
                total
            }
            LossKind::RobustQuasi(_) => {
                let fam = self.spec.family;
                let upper = fam.support_upper(s).expect("support truncation");
                let mut total = 0.0;
                for y in 0..=upper {
                    let yf = y as f64;
                    let f = fam.log_density(yf, s).exp();
                    let q = fam.score_s(yf, s);
                    total += f * q * self.nu(yf, s) + f * self.nu_ds(yf, s);
                }
                -total
            }
        }
    }

    fn clamp_to_g_domain(&self, s: f64) -> f64 {
        match self.spec.family {
            Family::Binomial { .. } => s.clamp(1e-12, 1.0 - 1e-12),
            Family::Poisson => s.clamp(1e-12, POISSON_G_HI),
        }
    }

    // ---- building blocks ------------------------------------------------

    /// Unit deviance `d(y, s) = A(y) - ln f(y, s) >= 0`.
    #[inline]
    pub(crate) fn deviance(&self, y: f64, s: f64) -> f64 {
        (self.spec.family.saturated_log_density(y) - self.spec.family.log_density(y, s)).max(0.0)
    }

    /// `nu(y, s) = psi(r(y, mu(s))) / sqrt(V(mu(s)))` (identity score for the
    /// classical loss).
    #[inline]
    fn nu(&self, y: f64, s: f64) -> f64 {
        let fam = self.spec.family;
        let v = fam.variance_of_param(s);
        match &self.spec.kind {
            LossKind::RobustQuasi(psi) => {
                let r = (y - fam.mean(s)) / v.sqrt();
                psi.eval(r) / v.sqrt()
            }
            _ => (y - fam.mean(s)) / v,
        }
    }

    /// `d nu / d s`.
    #[inline]
    fn nu_ds(&self, y: f64, s: f64) -> f64 {
        let fam = self.spec.family;
        let v = fam.variance_of_param(s);
        let vd = fam.variance_of_param_ds(s);
        let mu_d = match fam {
            Family::Binomial { trials } => trials as f64,
            Family::Poisson => 1.0,
        };
        match &self.spec.kind {
            LossKind::RobustQuasi(psi) => {
                let sv = v.sqrt();
                let r = (y - fam.mean(s)) / sv;
                let r_ds = -mu_d / sv - r * vd / (2.0 * v);
                psi.deriv(r) * r_ds / sv - psi.eval(r) * vd / (2.0 * v * sv)
            }
            _ => (-mu_d * v - (y - fam.mean(s)) * vd) / (v * v),
        }
    }

    /// Trial count for binomial responses (1 for Poisson); the classical
    /// quasi-likelihood on the probability scale is `deviance / m`.
    #[inline]
    fn count_scale(&self) -> f64 {
        match self.spec.family {
            Family::Binomial { trials } => trials as f64,
            Family::Poisson => 1.0,
        }
    }

    /// `int_{s0}^{s} nu(y, sigma) d sigma` in closed form.
    ///
    /// With the Huber score the integrand is the classical score between the
    /// residual crossings `r = +-c` and constant `+-c / sqrt(V)` outside, so
    /// the antiderivative is assembled from log-density and arcsine /
    /// square-root pieces. `s0` solves `nu(y, s0) = 0`, i.e. `mu(s0) = y`,
    /// where the classical antiderivative equals the saturated log density.
    fn nu_integral(&self, y: f64, s: f64, c: Option<f64>) -> f64 {
        let fam = self.spec.family;
        let scale = self.count_scale();
        // classical antiderivative, anchored so its value at s0 is zero
        let mid = |sig: f64| (fam.log_density(y, sig) - fam.saturated_log_density(y)) / scale;
        let Some(c) = c else {
            return mid(s);
        };
        let (lower, upper) = self.residual_crossings(y, c);
        // constant-score antiderivative: int c / sqrt(V(sigma)) d sigma
        let tail = |sig: f64| match fam {
            Family::Binomial { trials } => {
                2.0 * c / (trials as f64).sqrt() * sig.clamp(0.0, 1.0).sqrt().asin()
            }
            Family::Poisson => 2.0 * c * sig.max(0.0).sqrt(),
        };
        match (lower, upper) {
            (Some(lb), _) if s < lb => mid(lb) + tail(s) - tail(lb),
            (_, Some(ub)) if s > ub => mid(ub) - (tail(s) - tail(ub)),
            _ => mid(s),
        }
    }

    /// Solutions of `r(y, mu(s)) = +c` (below the saturated point) and
    /// `r = -c` (above it) inside the parameter space, if present.
    fn residual_crossings(&self, y: f64, c: f64) -> (Option<f64>, Option<f64>) {
        let fam = self.spec.family;
        let (qa, qb, qc, s0, hi) = match fam {
            Family::Binomial { trials } => {
                let m = trials as f64;
                (
                    m * m + c * c * m,
                    2.0 * m * y + c * c * m,
                    y * y,
                    y / m,
                    1.0,
                )
            }
            Family::Poisson => (1.0, 2.0 * y + c * c, y * y, y, f64::INFINITY),
        };
        let disc = qb * qb - 4.0 * qa * qc;
        if disc <= 0.0 {
            return (None, None);
        }
        let root = disc.sqrt();
        let r1 = (qb - root) / (2.0 * qa);
        let r2 = (qb + root) / (2.0 * qa);
        let lower = (r1 > 0.0 && r1 < s0).then_some(r1);
        let upper = (r2 > s0 && r2 < hi).then_some(r2);
        (lower, upper)
    }

    /// Root `s0` of `nu(y, s0) = 0` found by bisection (boundary responses
    /// sit at the closure of the parameter space).
    pub fn score_root(&self, y: f64) -> Result<f64> {
        self.spec.family.validate_response(y)?;
        let fam = self.spec.family;
        let (blo, bhi) = match fam {
            Family::Binomial { .. } => (1e-15, 1.0 - 1e-15),
            Family::Poisson => (1e-15, (2.0 * y).max(10.0)),
        };
        // nu has the sign of y - mu(s); boundary responses pin the root to
        // the edge of the parameter space.
        if y <= fam.mean(blo) {
            return Ok(fam.mean_param_of_mean(y).max(0.0));
        }
        if y >= fam.mean(bhi) {
            return Ok(fam.mean_param_of_mean(y));
        }
        bisect(|s| y - fam.mean(s), blo, bhi, 1e-12).ok_or_else(|| {
            GplmError::DegenerateObservation {
                y,
                family: fam.label(),
            }
        })
    }
}

/// Correction-term construction for a loss specification.
fn build_correction(spec: &LossSpec) -> Result<Correction> {
    match (&spec.kind, spec.family) {
        (LossKind::ClassicalQuasi, _) | (LossKind::ModifiedLikelihood(ScorePhi::Identity), _) => {
            Ok(Correction::Zero)
        }
        (LossKind::ModifiedLikelihood(ScorePhi::CrouxHaesbroeck { c }), Family::Binomial { trials: 1 }) => {
            Ok(Correction::ChBernoulli {
                c: *c,
                base_value: ch_bernoulli_raw(0.5, *c),
            })
        }
        _ => {
            let (lo, hi, base) = match spec.family {
                Family::Binomial { .. } => (1e-12, 1.0 - 1e-12, 0.5),
                Family::Poisson => (1e-12, POISSON_G_HI, 1.0),
            };
            let kinks = correction_kinks(spec, lo, hi)?;
            // Probe the skeleton model for G' (the table only needs the
            // derivative, which never touches the table itself).
            let probe = LossModel {
                spec: spec.clone(),
                correction: Correction::Zero,
            };
            // Poisson truncation feasibility over the whole tabulated range.
            spec.family.support_upper(match spec.family {
                Family::Poisson => POISSON_G_HI,
                _ => 0.5,
            })?;
            let table = CorrectionTable::build(
                |s| probe.g_deriv_raw(s),
                lo,
                hi,
                &kinks,
                base,
                G_TABLE_ORDER,
            );
            Ok(Correction::Table(table))
        }
    }
}

/// Locations where `G'` loses smoothness: support points crossing a score
/// branch.
fn correction_kinks(spec: &LossSpec, lo: f64, hi: f64) -> Result<Vec<f64>> {
    let fam = spec.family;
    let y_max = match fam {
        Family::Binomial { trials } => trials as u64,
        Family::Poisson => fam.support_upper(hi)?,
    };
    let mut kinks = Vec::new();
    match &spec.kind {
        LossKind::RobustQuasi(psi) => {
            let probe = LossModel {
                spec: spec.clone(),
                correction: Correction::Zero,
            };
            for y in 0..=y_max {
                let (l, u) = probe.residual_crossings(y as f64, psi.c);
                kinks.extend(l);
                kinks.extend(u);
            }
        }
        LossKind::ModifiedLikelihood(phi) => {
            let c = match phi {
                ScorePhi::BiancoYohai { c } | ScorePhi::CrouxHaesbroeck { c } => *c,
                ScorePhi::Identity => return Ok(kinks),
            };
            let probe = LossModel {
                spec: spec.clone(),
                correction: Correction::Zero,
            };
            for y in 0..=y_max {
                let yf = y as f64;
                let sat = match fam {
                    Family::Binomial { trials } => yf / trials as f64,
                    Family::Poisson => yf,
                };
                // d(y, .) decreases to 0 at the saturated point, then
                // increases; bisect d - c on each monotone side.
                let dev = |s: f64| probe.deviance(yf, s) - c;
                let pivot = sat.clamp(lo, hi);
                if pivot > lo && dev(lo) > 0.0 && dev(pivot) < 0.0 {
                    kinks.extend(bisect(dev, lo, pivot, 1e-13));
                }
                if pivot < hi && dev(hi) > 0.0 && dev(pivot) < 0.0 {
                    kinks.extend(bisect(dev, pivot, hi, 1e-13));
                }
            }
        }
        LossKind::ClassicalQuasi => {}
    }
    Ok(kinks)
}
