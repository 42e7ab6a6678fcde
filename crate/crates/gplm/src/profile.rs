//! Step 2: profile estimation of the parametric component.
//!
//! The profiled objective is
//! `F_n(beta) = n^{-1} sum_i rho(y_i, x_i' beta + eta_beta(t_i)) w2(x_i)`,
//! with `eta_beta` refit locally at every distinct sample point for each
//! candidate `beta`. The estimate is the grid minimizer of `F_n` (optionally
//! golden-refined); multidimensional problems use coordinate-descent sweeps
//! of line searches instead of a tensor grid.
//!
//! Inner local fits are warm-started from the previous candidate's solutions
//! and periodically refreshed from a coarse global scan so a basin change of
//! the non-convex local objective cannot go unnoticed; the returned fit is
//! always recomputed with cold full-precision local searches at the selected
//! `beta`.

use crate::data::Dataset;
use crate::error::{GplmError, Result};
use crate::kernel::KernelSpec;
use crate::loss::LossModel;
use crate::numeric::golden_min;
use crate::par;
use crate::smoothing::{build_stations, LocalFit, ScalarSearchSpec, Station};

/// Level-search tolerance while scanning the beta grid; the final fit is
/// re-solved at the full [`ScalarSearchSpec`] tolerance.
const SCAN_LEVEL_TOL: f64 = 1e-7;
/// Warm local fits are refreshed from a coarse global scan every this many
/// candidate evaluations (staggered across stations).
const REFRESH_PERIOD: usize = 12;
/// Convergence tolerance of a coordinate-descent sweep.
const SWEEP_TOL: f64 = 1e-5;
/// Maximum coordinate-descent sweeps.
const MAX_SWEEPS: usize = 50;

/// Search strategy for the parametric component.
#[derive(Debug, Clone)]
pub struct BetaSearchSpec {
    /// Grid center; zeros when absent.
    pub center: Option<Vec<f64>>,
    /// Grid half-width around the center.
    pub halfwidth: f64,
    /// Grid step.
    pub step: f64,
    /// Golden-section refinement tolerance around the grid minimum
    /// (`None` keeps the plain grid minimizer).
    pub refine_tol: Option<f64>,
}

impl Default for BetaSearchSpec {
    fn default() -> Self {
        BetaSearchSpec {
            center: None,
            halfwidth: 5.0,
            step: 0.05,
            refine_tol: Some(1e-4),
        }
    }
}

impl BetaSearchSpec {
    /// Plain grid search.
    pub fn grid(center: Vec<f64>, halfwidth: f64, step: f64) -> Self {
        BetaSearchSpec {
            center: Some(center),
            halfwidth,
            step,
            refine_tol: None,
        }
    }

    /// Grid search followed by golden-section refinement.
    pub fn grid_then_refine(step: f64, refine_tol: f64) -> Self {
        BetaSearchSpec {
            center: None,
            halfwidth: 5.0,
            step,
            refine_tol: Some(refine_tol),
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if !(self.step > 0.0) || !(self.halfwidth > 0.0) {
            return Err(GplmError::InvalidSpec(
                "beta search requires positive step and halfwidth".into(),
            ));
        }
        if let Some(tol) = self.refine_tol {
            if !(tol > 0.0) || tol >= self.step {
                return Err(GplmError::InvalidSpec(
                    "refine tolerance must be positive and below the grid step".into(),
                ));
            }
        }
        if let Some(c) = &self.center {
            if c.len() != p {
                return Err(GplmError::InvalidSpec(format!(
                    "search center has {} coordinates, data has {p}",
                    c.len()
                )));
            }
        }
        Ok(())
    }
}

/// Fitted model: parametric estimate, smooth component at the sample points,
/// and diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta_hat: Vec<f64>,
    /// `(t_i, eta_hat(t_i))` per observation, in original input order.
    pub eta_at: Vec<(f64, f64)>,
    /// Profiled objective at the estimate.
    pub objective: f64,
    /// Euclidean norm of the profile score at the estimate (NaN when a local
    /// derivative was ill conditioned).
    pub score_norm: f64,
    /// Estimated covariance of `beta_hat` (filled by the inference stage).
    pub cov_beta: Option<Vec<Vec<f64>>>,
    /// Standard errors of `beta_hat` (filled by the inference stage).
    pub se_beta: Option<Vec<f64>>,
    /// Local fits pinned at their bracket boundary at the estimate.
    pub boundary_local_fits: usize,
    /// Grid minimum sat on the search boundary (window likely too small).
    pub beta_on_boundary: bool,
    pub loss_label: String,
    pub kernel: KernelSpec,
}

/// Warm-startable evaluator of the profiled objective.
pub(crate) struct ProfileSolver<'a> {
    data: &'a Dataset,
    loss: &'a LossModel,
    stations: Vec<Station>,
    /// Previous level solution per station.
    warm: Vec<Option<f64>>,
    /// Evaluations since the last global refresh, staggered per station.
    refresh_clock: usize,
    /// `w2(x_i)` per canonical observation.
    w2: Vec<f64>,
}

impl<'a> ProfileSolver<'a> {
    pub(crate) fn new(
        data: &'a Dataset,
        loss: &'a LossModel,
        kernel: &KernelSpec,
    ) -> Result<Self> {
        let stations = build_stations(data, loss, kernel)?;
        let w2 = (0..data.n())
            .map(|i| loss.spec().w2.eval_row(data.x_row(i)))
            .collect();
        Ok(ProfileSolver {
            data,
            loss,
            warm: vec![None; stations.len()],
            stations,
            refresh_clock: 0,
            w2,
        })
    }

    /// Levels at every station for this `beta` (warm path).
    fn solve_levels(&mut self, preds: &[f64]) -> Vec<LocalFit> {
        let clock = self.refresh_clock;
        self.refresh_clock += 1;
        let data = self.data;
        let loss = self.loss;
        let stations = &self.stations;
        let mut slots: Vec<(Option<f64>, Option<LocalFit>)> =
            self.warm.iter().map(|w| (*w, None)).collect();
        par::for_each_mut(&mut slots, |k, slot| {
            let st = &stations[k];
            let fit = match slot.0 {
                Some(prev) if (clock + k) % REFRESH_PERIOD != 0 => {
                    st.fit_warm(data, loss, preds, prev, SCAN_LEVEL_TOL)
                }
                _ => {
                    let search = ScalarSearchSpec {
                        tol: SCAN_LEVEL_TOL,
                        ..Default::default()
                    };
                    st.fit(data, loss, preds, &search)
                }
            };
            slot.1 = Some(fit);
        });
        let fits: Vec<LocalFit> = slots.into_iter().map(|s| s.1.unwrap()).collect();
        for (w, f) in self.warm.iter_mut().zip(&fits) {
            *w = Some(f.estimate);
        }
        fits
    }

    /// Cold full-precision levels (used at the selected estimate and by the
    /// standalone objective/score entry points).
    fn solve_levels_cold(&self, preds: &[f64], search: &ScalarSearchSpec) -> Vec<LocalFit> {
        let data = self.data;
        let loss = self.loss;
        let stations = &self.stations;
        par::map_indexed(stations.len(), |k| {
            stations[k].fit(data, loss, preds, search)
        })
    }

    /// Per-observation level from per-station fits.
    fn scatter_levels(&self, fits: &[LocalFit]) -> Vec<f64> {
        let mut eta = vec![0.0; self.data.n()];
        for (st, fit) in self.stations.iter().zip(fits) {
            for slot in &mut eta[st.group.clone()] {
                *slot = fit.estimate;
            }
        }
        eta
    }

    /// `F_n` from per-observation levels (fixed summation order).
    fn objective_from_levels(&self, preds: &[f64], eta: &[f64]) -> f64 {
        let y = self.data.y();
        let mut total = 0.0;
        for i in 0..self.data.n() {
            total += self.loss.rho_raw(y[i], preds[i] + eta[i]) * self.w2[i];
        }
        total / self.data.n() as f64
    }

    pub(crate) fn objective(&mut self, beta: &[f64]) -> f64 {
        let preds = self.data.predictors(beta);
        let fits = self.solve_levels(&preds);
        let eta = self.scatter_levels(&fits);
        self.objective_from_levels(&preds, &eta)
    }

    /// Objective, levels and diagnostics with cold high-precision local fits.
    fn evaluate_cold(
        &self,
        beta: &[f64],
        search: &ScalarSearchSpec,
    ) -> (f64, Vec<LocalFit>, Vec<f64>) {
        let preds = self.data.predictors(beta);
        let fits = self.solve_levels_cold(&preds, search);
        let eta = self.scatter_levels(&fits);
        let obj = self.objective_from_levels(&preds, &eta);
        (obj, fits, eta)
    }

    /// Profile score `F^1_n(beta)` with the analytic level gradients.
    fn score_cold(
        &self,
        beta: &[f64],
        fits: &[LocalFit],
    ) -> Result<Vec<f64>> {
        let preds = self.data.predictors(beta);
        let p = self.data.p();
        let mut grad = vec![0.0; p];
        for (st, fit) in self.stations.iter().zip(fits) {
            let dlevel = st.level_dbeta(self.data, self.loss, &preds, fit.estimate)?;
            for i in st.group.clone() {
                let psi = self.loss.psi_raw(self.data.y()[i], preds[i] + fit.estimate);
                let w = self.w2[i] * psi;
                for j in 0..p {
                    grad[j] += w * (self.data.x_row(i)[j] + dlevel[j]);
                }
            }
        }
        for g in &mut grad {
            *g /= self.data.n() as f64;
        }
        Ok(grad)
    }
}

/// Profiled objective `F_n(beta)` (cold local fits at full precision).
pub fn profile_objective(
    beta: &[f64],
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
) -> Result<f64> {
    check_beta(beta, data)?;
    let solver = ProfileSolver::new(data, loss, kernel)?;
    Ok(solver.evaluate_cold(beta, &ScalarSearchSpec::default()).0)
}

/// Profile score `F^1_n(beta) = n^{-1} sum_i Psi_i w2_i (x_i + d eta/d beta)`.
pub fn profile_score(
    beta: &[f64],
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
) -> Result<Vec<f64>> {
    check_beta(beta, data)?;
    let solver = ProfileSolver::new(data, loss, kernel)?;
    let (_, fits, _) = solver.evaluate_cold(beta, &ScalarSearchSpec::default());
    solver.score_cold(beta, &fits)
}

/// Fit the parametric component by profile minimization.
pub fn fit_beta(
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
    search: &BetaSearchSpec,
) -> Result<FitResult> {
    fit_beta_restricted(data, loss, kernel, search, &[])
}

/// As [`fit_beta`] with the listed coordinates pinned to zero (used by the
/// discrepancy test's null fits). Pinned indices are 0-based.
pub fn fit_beta_restricted(
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
    search: &BetaSearchSpec,
    pinned: &[usize],
) -> Result<FitResult> {
    let p = data.p();
    search.validate(p)?;
    for &j in pinned {
        if j >= p {
            return Err(GplmError::InvalidSpec(format!(
                "pinned coordinate {j} out of range for p = {p}"
            )));
        }
    }
    let free: Vec<usize> = (0..p).filter(|j| !pinned.contains(j)).collect();
    check_design(data)?;
    let mut solver = ProfileSolver::new(data, loss, kernel)?;

    let mut center = search.center.clone().unwrap_or_else(|| vec![0.0; p]);
    for &j in pinned {
        center[j] = 0.0;
    }

    let (beta_best, on_boundary) = if free.is_empty() {
        (center.clone(), false)
    } else if free.len() == 1 {
        minimize_single(&mut solver, &center, free[0], search)
    } else {
        minimize_coordinates(&mut solver, &center, &free, search)
    };

    finalize_fit(&solver, data, loss, kernel, beta_best, on_boundary)
}

/// Grid(-then-refine) line minimization for one free coordinate.
fn minimize_single(
    solver: &mut ProfileSolver<'_>,
    center: &[f64],
    j: usize,
    search: &BetaSearchSpec,
) -> (Vec<f64>, bool) {
    let c = center[j];
    let steps = (search.halfwidth / search.step).round() as i64;
    let mut beta = center.to_vec();
    let mut best_v = f64::INFINITY;
    let mut best_k = -steps;
    for k in -steps..=steps {
        beta[j] = c + k as f64 * search.step;
        let v = solver.objective(&beta);
        if v < best_v {
            best_v = v;
            best_k = k;
        }
    }
    let on_boundary = best_k == -steps || best_k == steps;
    let mut best_x = c + best_k as f64 * search.step;
    if let Some(tol) = search.refine_tol {
        let refined = golden_min(
            |x| {
                beta[j] = x;
                solver.objective(&beta)
            },
            best_x - search.step,
            best_x + search.step,
            tol,
        );
        if refined.fx <= best_v {
            best_x = refined.x;
        }
    }
    beta[j] = best_x;
    (beta, on_boundary)
}

/// Coordinate-descent sweeps of golden-section line searches for `p > 1`.
fn minimize_coordinates(
    solver: &mut ProfileSolver<'_>,
    center: &[f64],
    free: &[usize],
    search: &BetaSearchSpec,
) -> (Vec<f64>, bool) {
    let mut beta = center.to_vec();
    let mut bracket = search.halfwidth;
    let mut on_boundary = false;
    let final_tol = search.refine_tol.unwrap_or(SWEEP_TOL.min(search.step));
    for sweep in 0..MAX_SWEEPS {
        let tol = if sweep < 2 { search.step } else { final_tol };
        let mut max_move = 0.0f64;
        for &j in free {
            let x0 = beta[j];
            let m = golden_min(
                |x| {
                    let mut b = beta.clone();
                    b[j] = x;
                    solver.objective(&b)
                },
                x0 - bracket,
                x0 + bracket,
                tol,
            );
            on_boundary = (m.x - (x0 - bracket)).abs() < 2.0 * tol
                || ((x0 + bracket) - m.x).abs() < 2.0 * tol;
            beta[j] = m.x;
            max_move = max_move.max((m.x - x0).abs());
        }
        bracket = (bracket * 0.5).max(8.0 * final_tol);
        if max_move < SWEEP_TOL && sweep >= 2 {
            break;
        }
    }
    (beta, on_boundary)
}

/// Re-solve at the estimate with full-precision cold local fits and collect
/// outputs.
fn finalize_fit(
    solver: &ProfileSolver<'_>,
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
    beta: Vec<f64>,
    beta_on_boundary: bool,
) -> Result<FitResult> {
    let (objective, fits, eta) = solver.evaluate_cold(&beta, &ScalarSearchSpec::default());
    let boundary_local_fits = fits.iter().filter(|f| f.boundary).count();
    let score_norm = match solver.score_cold(&beta, &fits) {
        Ok(g) => g.iter().map(|v| v * v).sum::<f64>().sqrt(),
        Err(_) => f64::NAN,
    };
    // report per-observation levels in the original input order
    let mut eta_at = vec![(0.0, 0.0); data.n()];
    for (canon, &orig) in data.orig_index().iter().enumerate() {
        eta_at[orig] = (data.t()[canon], eta[canon]);
    }
    Ok(FitResult {
        beta_hat: beta,
        eta_at,
        objective,
        score_norm,
        cov_beta: None,
        se_beta: None,
        boundary_local_fits,
        beta_on_boundary,
        loss_label: loss.label().to_string(),
        kernel: *kernel,
    })
}

fn check_beta(beta: &[f64], data: &Dataset) -> Result<()> {
    if beta.len() != data.p() {
        return Err(GplmError::Design(format!(
            "beta has {} coordinates, data has {}",
            beta.len(),
            data.p()
        )));
    }
    Ok(())
}

fn check_design(data: &Dataset) -> Result<()> {
    for j in 0..data.p() {
        let first = data.x_row(0)[j];
        if (1..data.n()).all(|i| data.x_row(i)[j] == first) {
            return Err(GplmError::Design(format!(
                "covariate column {j} is constant; the parametric effect is not identifiable"
            )));
        }
    }
    Ok(())
}
