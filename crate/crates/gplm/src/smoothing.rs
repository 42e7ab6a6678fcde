//! Step 1: kernel-weighted local M-estimation of the smooth component.
//!
//! For a candidate coefficient vector `beta` and a point `t`, the local level
//! is `argmin_a S_n(a, beta, t)` with
//! `S_n(a, beta, t) = sum_i W_i(t) rho(y_i, x_i' beta + a) w1(x_i)`.
//!
//! Robust losses make `S_n` non-convex in `a` (the first-order equation may
//! have multiple roots), so the minimizer is located by a coarse grid scan
//! followed by golden-section refinement; derivative information is used only
//! afterwards, for convergence diagnostics and the analytic derivative
//! formulas of the fitted level.

use std::ops::Range;

use crate::data::Dataset;
use crate::error::{GplmError, Result};
use crate::kernel::{kernel_weights, KernelSpec};
use crate::loss::LossModel;
use crate::numeric::{golden_min, grid_scan, scan_with_range};

/// Tolerance on the weighted score used for the `converged` diagnostic.
const SCORE_TOL: f64 = 1e-6;
/// Relative threshold below which the curvature denominator of the local
/// derivative formulas counts as ill conditioned.
const DERIV_DENOM_REL: f64 = 1e-10;

/// Controls for the scalar minimization of the local objective.
#[derive(Debug, Clone, Copy)]
pub struct ScalarSearchSpec {
    /// Points in the coarse scan of the bracket.
    pub grid_points: usize,
    /// Golden-section interval tolerance on the level.
    pub tol: f64,
    /// Bracket doublings allowed when the minimum sits on the bracket end.
    pub max_expand: usize,
}

impl Default for ScalarSearchSpec {
    fn default() -> Self {
        ScalarSearchSpec {
            grid_points: 401,
            tol: 1e-9,
            max_expand: 4,
        }
    }
}

/// Result of one local fit.
#[derive(Debug, Clone, Copy)]
pub struct LocalFit {
    /// Fitted level (the local estimate of the smooth component).
    pub estimate: f64,
    /// Objective value at the fitted level.
    pub objective: f64,
    /// Function evaluations spent.
    pub iterations: usize,
    /// Weighted score at the fitted level is below tolerance.
    pub converged: bool,
    /// Minimizer pinned at the (fully expanded) bracket boundary: the local
    /// problem likely has no interior minimum (all responses extreme).
    pub boundary: bool,
}

/// Precomputed smoothing geometry at one evaluation point: the kernel window
/// and the per-observation weights.
#[derive(Debug, Clone)]
pub(crate) struct Station {
    pub t: f64,
    /// Canonical observation range sharing this exact `t` (sample stations).
    pub group: Range<usize>,
    /// Canonical observation range inside the kernel support.
    pub window: Range<usize>,
    /// `w1(x_i)` over the window.
    pub w1: Vec<f64>,
    /// Normalized `K_i * w1(x_i)` products (the objective weights).
    pub ww: Vec<f64>,
}

impl Station {
    /// Build the station for an arbitrary query point `t`.
    pub(crate) fn at(
        t: f64,
        data: &Dataset,
        loss: &LossModel,
        kernel: &KernelSpec,
    ) -> Result<Self> {
        let window = match kernel.shape.support_radius() {
            Some(r) => data.window(t, r * kernel.h),
            None => 0..data.n(),
        };
        if window.is_empty() {
            return Err(GplmError::EmptyWindow { t, h: kernel.h });
        }
        let ts = &data.t()[window.clone()];
        let wk = kernel_weights(t, ts, kernel)?;
        let w1: Vec<f64> = window
            .clone()
            .map(|i| loss.spec().w1.eval_row(data.x_row(i)))
            .collect();
        let ww: Vec<f64> = wk.iter().zip(&w1).map(|(k, w)| k * w).collect();
        Ok(Station {
            t,
            group: 0..0,
            window,
            w1,
            ww,
        })
    }

    /// `S_n(a, beta, t)` given precomputed predictors `x_i' beta`.
    #[inline]
    pub(crate) fn objective(&self, data: &Dataset, loss: &LossModel, preds: &[f64], a: f64) -> f64 {
        let ys = &data.y()[self.window.clone()];
        let ps = &preds[self.window.clone()];
        let mut total = 0.0;
        for k in 0..ys.len() {
            total += self.ww[k] * loss.rho_raw(ys[k], ps[k] + a);
        }
        total
    }

    /// Weighted score `S^1_n(a, beta, t)`.
    pub(crate) fn score(&self, data: &Dataset, loss: &LossModel, preds: &[f64], a: f64) -> f64 {
        let ys = &data.y()[self.window.clone()];
        let ps = &preds[self.window.clone()];
        let mut total = 0.0;
        for k in 0..ys.len() {
            total += self.ww[k] * loss.psi_raw(ys[k], ps[k] + a);
        }
        total
    }

    /// Weighted curvature `sum_i W_i w1_i chi_i`.
    fn curvature(&self, data: &Dataset, loss: &LossModel, preds: &[f64], a: f64) -> f64 {
        let ys = &data.y()[self.window.clone()];
        let ps = &preds[self.window.clone()];
        let mut total = 0.0;
        for k in 0..ys.len() {
            total += self.ww[k] * loss.chi_raw(ys[k], ps[k] + a);
        }
        total
    }

    /// Newton steps on the weighted score around a located minimum.
    ///
    /// Objective comparisons cannot resolve the minimizer below ~sqrt(eps);
    /// the score is accurate to machine precision, so a few guarded Newton
    /// steps recover the stated level accuracy. The step never leaves
    /// `radius` and the result is discarded if it worsens the objective.
    fn newton_polish(
        &self,
        data: &Dataset,
        loss: &LossModel,
        preds: &[f64],
        x0: f64,
        radius: f64,
        f0: f64,
    ) -> (f64, f64) {
        let mut x = x0;
        for _ in 0..8 {
            let s = self.score(data, loss, preds, x);
            let c = self.curvature(data, loss, preds, x);
            if !s.is_finite() || !(c > 0.0) {
                break;
            }
            let step = -s / c;
            if !step.is_finite() || step.abs() > radius || (x + step - x0).abs() > radius {
                break;
            }
            x += step;
            if step.abs() <= 1e-13 * x.abs().max(1.0) {
                break;
            }
        }
        let fx = self.objective(data, loss, preds, x);
        if fx <= f0 + 1e-12 * f0.abs().max(1.0) {
            (x, fx)
        } else {
            (x0, f0)
        }
    }

    /// Default search bracket: the link image of the family's near-full mean
    /// range, shifted by the median window predictor so the level search
    /// stays centered on the data.
    fn base_bracket(&self, data: &Dataset, loss: &LossModel, preds: &[f64]) -> (f64, f64) {
        let link = loss.link();
        let (s_lo, s_hi) = match loss.family() {
            crate::family::Family::Binomial { .. } => (0.001, 0.999),
            crate::family::Family::Poisson => {
                let max_y = data.y()[self.window.clone()]
                    .iter()
                    .fold(0.0f64, |m, &y| m.max(y));
                (0.01, 3.0 * max_y + 1.0)
            }
        };
        let mut ps: Vec<f64> = preds[self.window.clone()].to_vec();
        ps.sort_by(f64::total_cmp);
        let med = ps[ps.len() / 2];
        let lo = link.h_inv(s_lo).expect("bracket bound") - med;
        let hi = link.h_inv(s_hi).expect("bracket bound") - med;
        (lo, hi)
    }

    /// Full search: coarse scan, boundary expansion, golden refinement.
    pub(crate) fn fit(
        &self,
        data: &Dataset,
        loss: &LossModel,
        preds: &[f64],
        search: &ScalarSearchSpec,
    ) -> LocalFit {
        let (mut lo, mut hi) = self.base_bracket(data, loss, preds);
        let f = |a: f64| self.objective(data, loss, preds, a);
        let mut evals = 0usize;
        let mut scan = scan_with_range(&f, lo, hi, search.grid_points);
        evals += search.grid_points;
        for _ in 0..search.max_expand {
            let interior = scan.best.x > lo && scan.best.x < hi;
            let plateau = scan.range <= 1e-12 * scan.best.fx.abs().max(1.0);
            if interior || plateau {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let half = hi - mid;
            lo = mid - 2.0 * half;
            hi = mid + 2.0 * half;
            scan = scan_with_range(&f, lo, hi, search.grid_points);
            evals += search.grid_points;
        }
        let best = scan.best;
        // a minimum no deeper than a bracket end is a saturation plateau,
        // not an interior minimum (bounded losses level off in both tails)
        let end_floor = f(lo).min(f(hi));
        let boundary = best.x <= lo
            || best.x >= hi
            || end_floor - best.fx <= 1e-12 * best.fx.abs().max(1.0);
        if boundary {
            // no interior minimum to refine
            return LocalFit {
                estimate: best.x,
                objective: best.fx,
                iterations: evals,
                converged: false,
                boundary: true,
            };
        }
        self.polish(data, loss, preds, best.x, hi - lo, search, evals, false)
    }

    /// Warm search around a previous solution; escalates to a coarse scan
    /// over the base bracket when the local minimum keeps running into the
    /// scan edge.
    pub(crate) fn fit_warm(
        &self,
        data: &Dataset,
        loss: &LossModel,
        preds: &[f64],
        prev: f64,
        tol: f64,
    ) -> LocalFit {
        let f = |a: f64| self.objective(data, loss, preds, a);
        let mut half = 0.3;
        let mut evals = 0usize;
        for _ in 0..3 {
            let scan = scan_with_range(&f, prev - half, prev + half, 7);
            evals += 7;
            // saturated objective: the level is irrelevant here, keep the
            // previous one instead of escalating to a global search
            if scan.range <= 1e-9 * scan.best.fx.abs().max(1e-3) {
                return LocalFit {
                    estimate: prev,
                    objective: scan.best.fx,
                    iterations: evals,
                    converged: false,
                    boundary: true,
                };
            }
            if scan.best.x > prev - half && scan.best.x < prev + half {
                let spacing = half / 3.0;
                let refined = golden_min(f, scan.best.x - spacing, scan.best.x + spacing, tol);
                return LocalFit {
                    estimate: refined.x,
                    objective: refined.fx,
                    iterations: evals + refined.iterations + 1,
                    converged: true,
                    boundary: false,
                };
            }
            half *= 2.0;
        }
        // lost the basin: refresh from a coarse global scan
        let search = ScalarSearchSpec {
            grid_points: 101,
            tol,
            ..Default::default()
        };
        self.fit(data, loss, preds, &search)
    }

    #[allow(clippy::too_many_arguments)]
    fn polish(
        &self,
        data: &Dataset,
        loss: &LossModel,
        preds: &[f64],
        center: f64,
        width: f64,
        search: &ScalarSearchSpec,
        evals: usize,
        boundary: bool,
    ) -> LocalFit {
        let f = |a: f64| self.objective(data, loss, preds, a);
        let spacing = width / (search.grid_points - 1) as f64;
        let refined = golden_min(f, center - spacing, center + spacing, search.tol);
        let (estimate, objective) = if boundary {
            (refined.x, refined.fx)
        } else {
            self.newton_polish(data, loss, preds, refined.x, spacing, refined.fx)
        };
        let score = self.score(data, loss, preds, estimate);
        LocalFit {
            estimate,
            objective,
            iterations: evals + refined.iterations + 1,
            converged: !boundary && score.abs() <= SCORE_TOL,
            boundary,
        }
    }

    /// Gradient of the fitted level in `beta` via implicit differentiation of
    /// the weighted score equation:
    /// `d level / d beta_j = -(sum_i K_i w1_i chi_i x_ij) / (sum_i K_i w1_i chi_i)`.
    pub(crate) fn level_dbeta(
        &self,
        data: &Dataset,
        loss: &LossModel,
        preds: &[f64],
        level: f64,
    ) -> Result<Vec<f64>> {
        let p = data.p();
        let ys = &data.y()[self.window.clone()];
        let ps = &preds[self.window.clone()];
        let mut den = 0.0;
        let mut gross = 0.0;
        let mut num = vec![0.0; p];
        for (k, i) in self.window.clone().enumerate() {
            let chi = loss.chi_raw(ys[k], ps[k] + level);
            let wchi = self.ww[k] * chi;
            den += wchi;
            gross += wchi.abs();
            for (j, nj) in num.iter_mut().enumerate() {
                *nj += wchi * data.x_row(i)[j];
            }
        }
        if den.abs() <= DERIV_DENOM_REL * gross.max(f64::MIN_POSITIVE) {
            return Err(GplmError::IllConditionedDerivative { t: self.t });
        }
        Ok(num.into_iter().map(|nj| -nj / den).collect())
    }

    /// Derivative of the fitted level in `t` (differentiable kernels only;
    /// `None` when the kernel has no derivative).
    pub(crate) fn level_dt_analytic(
        &self,
        data: &Dataset,
        loss: &LossModel,
        kernel: &KernelSpec,
        preds: &[f64],
        level: f64,
    ) -> Option<Result<f64>> {
        kernel.shape.k_deriv(0.0)?;
        let ys = &data.y()[self.window.clone()];
        let ps = &preds[self.window.clone()];
        let ts = &data.t()[self.window.clone()];
        let mut num = 0.0;
        let mut den = 0.0;
        let mut gross = 0.0;
        for k in 0..ys.len() {
            let v = (self.t - ts[k]) / kernel.h;
            let kd = kernel.shape.k_deriv(v).expect("differentiable kernel");
            num += kd / kernel.h * self.w1[k] * loss.psi_raw(ys[k], ps[k] + level);
            let wchi = kernel.shape.k(v) * self.w1[k] * loss.chi_raw(ys[k], ps[k] + level);
            den += wchi;
            gross += wchi.abs();
        }
        if den.abs() <= DERIV_DENOM_REL * gross.max(f64::MIN_POSITIVE) {
            return Some(Err(GplmError::IllConditionedDerivative { t: self.t }));
        }
        Some(Ok(-num / den))
    }
}

/// Stations at every distinct sample point (windows, kernel weights, group
/// ranges), shared by the profile stage.
pub(crate) fn build_stations(
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
) -> Result<Vec<Station>> {
    data.groups()
        .iter()
        .map(|(t, group)| {
            let mut st = Station::at(*t, data, loss, kernel)?;
            st.group = group.clone();
            Ok(st)
        })
        .collect()
}

/// Local objective `S_n(a, beta, t)`.
pub fn local_objective(
    a: f64,
    beta: &[f64],
    t: f64,
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
) -> Result<f64> {
    check_beta(beta, data)?;
    let st = Station::at(t, data, loss, kernel)?;
    Ok(st.objective(data, loss, &data.predictors(beta), a))
}

/// Fit the local level at `t` for the given `beta`.
pub fn local_fit(
    beta: &[f64],
    t: f64,
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
    search: &ScalarSearchSpec,
) -> Result<LocalFit> {
    check_beta(beta, data)?;
    let st = Station::at(t, data, loss, kernel)?;
    Ok(st.fit(data, loss, &data.predictors(beta), search))
}

/// Gradient of the fitted level in `beta` at its minimizer.
pub fn local_fit_dbeta(
    beta: &[f64],
    t: f64,
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
) -> Result<Vec<f64>> {
    check_beta(beta, data)?;
    let st = Station::at(t, data, loss, kernel)?;
    let preds = data.predictors(beta);
    let fit = st.fit(data, loss, &preds, &ScalarSearchSpec::default());
    st.level_dbeta(data, loss, &preds, fit.estimate)
}

/// Derivative of the fitted level in `t`: analytic for differentiable
/// kernels, central finite difference with step `h/100` otherwise.
pub fn local_fit_dt(
    beta: &[f64],
    t: f64,
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
) -> Result<f64> {
    check_beta(beta, data)?;
    let preds = data.predictors(beta);
    let search = ScalarSearchSpec::default();
    let st = Station::at(t, data, loss, kernel)?;
    let fit = st.fit(data, loss, &preds, &search);
    if let Some(res) = st.level_dt_analytic(data, loss, kernel, &preds, fit.estimate) {
        return res;
    }
    let dt = kernel.h / 100.0;
    let hi = Station::at(t + dt, data, loss, kernel)?
        .fit(data, loss, &preds, &search)
        .estimate;
    let lo = Station::at(t - dt, data, loss, kernel)?
        .fit(data, loss, &preds, &search)
        .estimate;
    Ok((hi - lo) / (2.0 * dt))
}

fn check_beta(beta: &[f64], data: &Dataset) -> Result<()> {
    if beta.len() != data.p() {
        return Err(GplmError::Design(format!(
            "beta has {} coordinates, data has {}",
            beta.len(),
            data.p()
        )));
    }
    if !beta.iter().all(|b| b.is_finite()) {
        return Err(GplmError::Design("non-finite beta".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::Family;
    use crate::link::Link;
    use crate::loss::{LossModel, LossSpec};
    use crate::numeric::bisect;
    use crate::score::ScorePhi;
    use crate::weight::WeightFn;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn unif(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn bernoulli_models() -> Vec<LossModel> {
        let fam = Family::Binomial { trials: 1 };
        vec![
            LossModel::new(LossSpec::classical(fam, Link::Logit)).unwrap(),
            LossModel::new(
                LossSpec::robust_quasi(fam, Link::Logit, 1.2, WeightFn::Unit, WeightFn::Unit)
                    .unwrap(),
            )
            .unwrap(),
            LossModel::new(LossSpec::modified(
                fam,
                Link::Logit,
                ScorePhi::croux_haesbroeck(0.5).unwrap(),
                WeightFn::Unit,
                WeightFn::Unit,
            ))
            .unwrap(),
        ]
    }

    fn small_dataset(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut t = Vec::new();
        loop {
            y.clear();
            x.clear();
            t.clear();
            for _ in 0..n {
                x.push(vec![unif(rng, -1.0, 1.0)]);
                t.push(unif(rng, 0.0, 1.0));
                y.push(if unif(rng, 0.0, 1.0) < 0.5 { 1.0 } else { 0.0 });
            }
            // mixed responses keep the local minima interior
            if y.iter().any(|&v| v == 0.0) && y.iter().any(|&v| v == 1.0) {
                break;
            }
        }
        Dataset::new(y, x, t).unwrap()
    }

    #[test]
    fn no_covariate_fit_is_link_inverse_of_weighted_mean() {
        let data = Dataset::new(
            vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0],
            vec![vec![0.0]; 6],
            vec![0.45, 0.5, 0.5, 0.55, 0.6, 0.4],
        )
        .unwrap();
        let loss = LossModel::new(LossSpec::classical(
            Family::Binomial { trials: 1 },
            Link::Logit,
        ))
        .unwrap();
        let kernel = KernelSpec::triangular(0.3).unwrap();
        let fit = local_fit(
            &[0.0],
            0.5,
            &data,
            &loss,
            &kernel,
            &ScalarSearchSpec::default(),
        )
        .unwrap();
        let w = kernel_weights(0.5, data.t(), &kernel).unwrap();
        let mean: f64 = w.iter().zip(data.y()).map(|(wi, yi)| wi * yi).sum();
        let want = Link::Logit.h_inv(mean).unwrap();
        assert!(
            (fit.estimate - want).abs() < 1e-8,
            "{} vs {want}",
            fit.estimate
        );
        assert!(fit.converged && !fit.boundary);
    }

    #[test]
    fn robust_losses_also_reduce_to_weighted_mean_on_bernoulli() {
        let data = Dataset::new(
            vec![1.0, 0.0, 1.0, 1.0, 0.0],
            vec![vec![0.0]; 5],
            vec![0.5; 5],
        )
        .unwrap();
        let kernel = KernelSpec::triangular(0.2).unwrap();
        for loss in bernoulli_models() {
            let fit = local_fit(
                &[0.0],
                0.5,
                &data,
                &loss,
                &kernel,
                &ScalarSearchSpec::default(),
            )
            .unwrap();
            let want = Link::Logit.h_inv(0.6).unwrap();
            assert!(
                (fit.estimate - want).abs() < 1e-8,
                "{}: {} vs {want}",
                loss.label(),
                fit.estimate
            );
        }
    }

    #[test]
    fn single_observation_solves_score_equation() {
        let data = Dataset::new(vec![7.0], vec![vec![0.3]], vec![0.2]).unwrap();
        let loss = LossModel::new(LossSpec::classical(
            Family::Binomial { trials: 10 },
            Link::Logit,
        ))
        .unwrap();
        let kernel = KernelSpec::triangular(0.1).unwrap();
        let beta = [0.4];
        let fit = local_fit(
            &beta,
            0.2,
            &data,
            &loss,
            &kernel,
            &ScalarSearchSpec::default(),
        )
        .unwrap();
        let c = 0.3 * 0.4;
        let root = bisect(|a| loss.psi(7.0, c + a).unwrap(), -8.0, 8.0, 1e-12).unwrap();
        assert!((fit.estimate - root).abs() < 1e-8);
    }

    #[test]
    fn all_extreme_responses_flag_boundary() {
        let data = Dataset::new(vec![1.0, 1.0, 1.0, 1.0], vec![vec![0.0]; 4], vec![0.5; 4])
            .unwrap();
        let loss = LossModel::new(LossSpec::classical(
            Family::Binomial { trials: 1 },
            Link::Logit,
        ))
        .unwrap();
        let kernel = KernelSpec::triangular(0.2).unwrap();
        let fit = local_fit(
            &[0.0],
            0.5,
            &data,
            &loss,
            &kernel,
            &ScalarSearchSpec::default(),
        )
        .unwrap();
        assert!(fit.boundary);
        assert!(!fit.converged);
    }

    #[test]
    fn objective_is_weighted_sum() {
        let data = Dataset::new(
            vec![1.0, 0.0, 1.0],
            vec![vec![0.5], vec![-0.2], vec![0.1]],
            vec![0.48, 0.5, 0.53],
        )
        .unwrap();
        let loss = LossModel::new(LossSpec::classical(
            Family::Binomial { trials: 1 },
            Link::Logit,
        ))
        .unwrap();
        let kernel = KernelSpec::triangular(0.1).unwrap();
        let a = 0.3;
        let got = local_objective(a, &[0.0], 0.5, &data, &loss, &kernel).unwrap();
        // direct recomputation from the displayed formula
        let w = kernel_weights(0.5, data.t(), &kernel).unwrap();
        let mut want = 0.0;
        for i in 0..3 {
            want += w[i] * loss.rho(data.y()[i], a).unwrap();
        }
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn single_observation_objective_is_single_term() {
        let data = Dataset::new(vec![1.0], vec![vec![0.7]], vec![0.5]).unwrap();
        let loss = LossModel::new(LossSpec::classical(
            Family::Binomial { trials: 1 },
            Link::Logit,
        ))
        .unwrap();
        let kernel = KernelSpec::triangular(0.1).unwrap();
        let got = local_objective(0.4, &[2.0], 0.5, &data, &loss, &kernel).unwrap();
        let want = loss.rho(1.0, 0.7 * 2.0 + 0.4).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn grid_oracle_equivalence_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let kernel = KernelSpec::triangular(0.4).unwrap();
        let models = bernoulli_models();
        let mut checked = 0;
        for trial in 0..50 {
            let data = small_dataset(&mut rng, 4 + (trial % 7));
            let loss = &models[trial % models.len()];
            let beta = [unif(&mut rng, -1.0, 1.0)];
            let t = data.t()[0];
            let Ok(fit) = local_fit(&beta, t, &data, loss, &kernel, &ScalarSearchSpec::default())
            else {
                continue;
            };
            if fit.boundary {
                continue;
            }
            let preds = data.predictors(&beta);
            let st = Station::at(t, &data, loss, &kernel).unwrap();
            let dense = grid_scan(
                |a| st.objective(&data, loss, &preds, a),
                -12.0,
                12.0,
                100_001,
            );
            assert!(
                (fit.estimate - dense.x).abs() < 1e-3 && fit.objective <= dense.fx + 1e-12,
                "trial {trial}: {} vs oracle {}",
                fit.estimate,
                dense.x
            );
            checked += 1;
        }
        assert!(checked >= 35, "only {checked} instances checked");
    }

    #[test]
    fn location_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = small_dataset(&mut rng, 12);
        let kernel = KernelSpec::triangular(0.5).unwrap();
        let models = bernoulli_models();
        let loss = &models[1];
        let t = data.t()[3];
        let base = local_fit(&[0.7], t, &data, loss, &kernel, &ScalarSearchSpec::default())
            .unwrap();
        // a constant delta added to the predictor shifts the level by -delta
        let delta = 0.9;
        let rows: Vec<Vec<f64>> = (0..data.n())
            .map(|i| vec![data.x_row(i)[0], 1.0])
            .collect();
        let data2 = Dataset::new(data.y().to_vec(), rows, data.t().to_vec()).unwrap();
        let fit2 = local_fit(
            &[0.7, delta],
            t,
            &data2,
            loss,
            &kernel,
            &ScalarSearchSpec::default(),
        )
        .unwrap();
        assert!(
            (fit2.estimate - (base.estimate - delta)).abs() < 1e-8,
            "{} vs {}",
            fit2.estimate,
            base.estimate - delta
        );
    }

    #[test]
    fn score_small_at_interior_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let kernel = KernelSpec::triangular(0.5).unwrap();
        for loss in bernoulli_models() {
            let data = small_dataset(&mut rng, 15);
            let preds = data.predictors(&[0.5]);
            let st = Station::at(data.t()[5], &data, &loss, &kernel).unwrap();
            let fit = st.fit(&data, &loss, &preds, &ScalarSearchSpec::default());
            if !fit.boundary {
                let s = st.score(&data, &loss, &preds, fit.estimate);
                assert!(s.abs() <= 1e-6, "{}: score {s}", loss.label());
            }
        }
    }

    #[test]
    fn level_dbeta_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let kernel = KernelSpec::triangular(0.5).unwrap();
        let models = bernoulli_models();
        let mut checked = 0;
        for trial in 0..50 {
            let data = small_dataset(&mut rng, 10 + trial % 5);
            let loss = &models[trial % models.len()];
            let beta = [unif(&mut rng, -0.8, 0.8)];
            let t = data.t()[trial % data.n()];
            let Ok(grad) = local_fit_dbeta(&beta, t, &data, loss, &kernel) else {
                continue;
            };
            let db = 1e-5;
            let search = ScalarSearchSpec {
                tol: 1e-11,
                ..Default::default()
            };
            let hi = local_fit(&[beta[0] + db], t, &data, loss, &kernel, &search).unwrap();
            let lo = local_fit(&[beta[0] - db], t, &data, loss, &kernel, &search).unwrap();
            if hi.boundary || lo.boundary {
                continue;
            }
            let fd = (hi.estimate - lo.estimate) / (2.0 * db);
            assert!(
                (grad[0] - fd).abs() <= 1e-4 * fd.abs().max(1.0),
                "trial {trial} {}: analytic {} vs fd {fd}",
                loss.label(),
                grad[0]
            );
            checked += 1;
        }
        assert!(checked >= 30, "only {checked} instances checked");
    }

    #[test]
    fn level_dbeta_zero_for_zero_covariates() {
        let data = Dataset::new(
            vec![1.0, 0.0, 1.0, 0.0],
            vec![vec![0.0]; 4],
            vec![0.5; 4],
        )
        .unwrap();
        let loss = LossModel::new(LossSpec::classical(
            Family::Binomial { trials: 1 },
            Link::Logit,
        ))
        .unwrap();
        let kernel = KernelSpec::triangular(0.2).unwrap();
        let grad = local_fit_dbeta(&[0.0], 0.5, &data, &loss, &kernel).unwrap();
        assert_eq!(grad, vec![0.0]);
    }

    #[test]
    fn level_dbeta_antisymmetric_design() {
        // symmetric two-point design with equal responses: the gradient flips
        // sign with beta
        let loss = LossModel::new(LossSpec::classical(
            Family::Binomial { trials: 10 },
            Link::Logit,
        ))
        .unwrap();
        let kernel = KernelSpec::triangular(0.2).unwrap();
        let d =
            Dataset::new(vec![4.0, 4.0], vec![vec![0.8], vec![-0.8]], vec![0.5, 0.5]).unwrap();
        let g1 = local_fit_dbeta(&[0.3], 0.5, &d, &loss, &kernel).unwrap();
        let g2 = local_fit_dbeta(&[-0.3], 0.5, &d, &loss, &kernel).unwrap();
        assert!((g1[0] + g2[0]).abs() < 1e-8);
        let db = 1e-5;
        let s = ScalarSearchSpec {
            tol: 1e-11,
            ..Default::default()
        };
        let hi = local_fit(&[0.3 + db], 0.5, &d, &loss, &kernel, &s).unwrap();
        let lo = local_fit(&[0.3 - db], 0.5, &d, &loss, &kernel, &s).unwrap();
        let fd = (hi.estimate - lo.estimate) / (2.0 * db);
        assert!((g1[0] - fd).abs() < 1e-6 * fd.abs().max(1.0));
    }

    #[test]
    fn level_dt_gaussian_analytic_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let data = small_dataset(&mut rng, 25);
        let models = bernoulli_models();
        let loss = &models[0];
        let kernel = KernelSpec::new(crate::kernel::KernelShape::Gaussian, 0.25).unwrap();
        let t = 0.5;
        let beta = [0.4];
        let grad = local_fit_dt(&beta, t, &data, loss, &kernel).unwrap();
        let dt = 1e-5;
        let s = ScalarSearchSpec {
            tol: 1e-11,
            ..Default::default()
        };
        let hi = local_fit(&beta, t + dt, &data, loss, &kernel, &s).unwrap();
        let lo = local_fit(&beta, t - dt, &data, loss, &kernel, &s).unwrap();
        let fd = (hi.estimate - lo.estimate) / (2.0 * dt);
        assert!(
            (grad - fd).abs() <= 1e-4 * fd.abs().max(1.0),
            "analytic {grad} vs fd {fd}"
        );
    }

    #[test]
    fn empty_window_propagates() {
        let data =
            Dataset::new(vec![1.0, 0.0], vec![vec![0.1], vec![0.2]], vec![0.1, 0.15]).unwrap();
        let loss = LossModel::new(LossSpec::classical(
            Family::Binomial { trials: 1 },
            Link::Logit,
        ))
        .unwrap();
        let kernel = KernelSpec::triangular(0.05).unwrap();
        assert!(matches!(
            local_objective(0.0, &[0.0], 0.9, &data, &loss, &kernel),
            Err(GplmError::EmptyWindow { .. })
        ));
    }
}
