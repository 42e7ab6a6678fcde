//! Sandwich-covariance inference and tests on the parametric component.
//!
//! The estimate is asymptotically normal with covariance
//! `A^{-1} Sigma (A^{-1})'`, estimated by plug-in:
//!
//! * `A_hat = n^{-1} sum_i chi_i z_i z_i' w2_i` with
//!   `z_i = x_i + d eta/d beta (t_i)` — the simplified form valid under
//!   conditional Fisher consistency, which all implemented scores satisfy
//!   (no second derivatives of the local fit are needed);
//! * `Sigma_hat = n^{-1} sum_i Psi_i^2 w2_i^2 z_i z_i'`.
//!
//! Hypotheses on a sub-vector of `beta` are tested by a Wald statistic
//! (chi-square calibration) or by the robust discrepancy
//! `Lambda = 2 [sum rho(null) - sum rho(full)]`, which is asymptotically a
//! weighted sum of one-degree chi-squares; its weights come from the
//! `A_{22.1}` block and the sandwich covariance, and the p-value is evaluated
//! by seeded Monte Carlo.

use rand_core::{RngCore, SeedableRng};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{GplmError, Result};
use crate::kernel::KernelSpec;
use crate::linalg::Mat;
use crate::loss::LossModel;
use crate::par;
use crate::profile::{fit_beta, fit_beta_restricted, BetaSearchSpec, FitResult};
use crate::smoothing::{build_stations, ScalarSearchSpec};

/// 1-norm condition estimate beyond which `A_hat` is flagged near singular.
const NEAR_SINGULAR_COND: f64 = 1e10;
/// Monte Carlo draws for the weighted-chi-square p-value.
const LAMBDA_MC_DRAWS: usize = 100_000;
/// Fixed shard layout so the p-value is identical for any thread count.
const LAMBDA_MC_SHARDS: usize = 100;
/// Discrepancies below this negative tolerance mean the null fit beat the
/// full fit.
const LAMBDA_NEG_TOL: f64 = -1e-6;

/// Plug-in sandwich covariance of the parametric estimate.
#[derive(Debug, Clone)]
pub struct SandwichEstimate {
    pub a_hat: Vec<Vec<f64>>,
    pub sigma_hat: Vec<Vec<f64>>,
    /// `A^{-1} Sigma (A^{-1})' / n`.
    pub cov_beta: Vec<Vec<f64>>,
    /// 1-norm condition estimate of `A_hat`.
    pub condition_number: f64,
    /// Condition estimate exceeded the near-singularity threshold.
    pub near_singular: bool,
}

impl SandwichEstimate {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.cov_beta.len())
            .map(|j| self.cov_beta[j][j].max(0.0).sqrt())
            .collect()
    }
}

/// Statistical test outcome.
#[derive(Debug, Clone)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    /// Degrees of freedom (Wald) .
    pub df: Option<usize>,
    /// Chi-square mixture weights (discrepancy test).
    pub spectrum: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMethod {
    Wald,
    Lambda,
}

/// Per-observation ingredients of the sandwich sums.
struct SandwichParts {
    chi: Vec<f64>,
    psi: Vec<f64>,
    /// `z_i = x_i + d eta / d beta (t_i)` rows.
    z: Vec<Vec<f64>>,
    w2: Vec<f64>,
}

fn sandwich_parts(
    fit: &FitResult,
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
) -> Result<SandwichParts> {
    let beta = &fit.beta_hat;
    let preds = data.predictors(beta);
    let stations = build_stations(data, loss, kernel)?;
    let search = ScalarSearchSpec::default();
    let n = data.n();
    let p = data.p();
    let fits = par::map_indexed(stations.len(), |k| {
        stations[k].fit(data, loss, &preds, &search)
    });
    let mut parts = SandwichParts {
        chi: vec![0.0; n],
        psi: vec![0.0; n],
        z: vec![Vec::new(); n],
        w2: vec![0.0; n],
    };
    for (st, lf) in stations.iter().zip(&fits) {
        let dlevel = st.level_dbeta(data, loss, &preds, lf.estimate)?;
        for i in st.group.clone() {
            let u = preds[i] + lf.estimate;
            parts.chi[i] = loss.chi_raw(data.y()[i], u);
            parts.psi[i] = loss.psi_raw(data.y()[i], u);
            parts.w2[i] = loss.spec().w2.eval_row(data.x_row(i));
            let mut z = Vec::with_capacity(p);
            for j in 0..p {
                z.push(data.x_row(i)[j] + dlevel[j]);
            }
            parts.z[i] = z;
        }
    }
    Ok(parts)
}

fn matrix_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.n).map(|i| (0..m.n).map(|j| m.get(i, j)).collect()).collect()
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Mat {
    Mat::from_rows(rows)
}

/// `A_hat = n^{-1} sum_i chi_i z_i z_i' w2_i`, symmetrized.
pub fn estimate_a_matrix(
    fit: &FitResult,
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
) -> Result<Vec<Vec<f64>>> {
    let parts = sandwich_parts(fit, data, loss, kernel)?;
    Ok(matrix_to_rows(&a_from_parts(&parts, data.p())))
}

/// `Sigma_hat = n^{-1} sum_i Psi_i^2 w2_i^2 z_i z_i'`.
pub fn estimate_sigma_matrix(
    fit: &FitResult,
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
) -> Result<Vec<Vec<f64>>> {
    let parts = sandwich_parts(fit, data, loss, kernel)?;
    Ok(matrix_to_rows(&sigma_from_parts(&parts, data.p())))
}

fn a_from_parts(parts: &SandwichParts, p: usize) -> Mat {
    let n = parts.chi.len();
    let mut a = Mat::zeros(p);
    for i in 0..n {
        a.add_outer(&parts.z[i], parts.chi[i] * parts.w2[i]);
    }
    a.scale(1.0 / n as f64);
    // numerically symmetrize (the sum is symmetric up to rounding)
    let at = a.transpose();
    let mut out = Mat::zeros(p);
    for i in 0..p {
        for j in 0..p {
            out.set(i, j, 0.5 * (a.get(i, j) + at.get(i, j)));
        }
    }
    out
}

fn sigma_from_parts(parts: &SandwichParts, p: usize) -> Mat {
    let n = parts.chi.len();
    let mut s = Mat::zeros(p);
    for i in 0..n {
        let w = parts.psi[i] * parts.w2[i];
        s.add_outer(&parts.z[i], w * w);
    }
    s.scale(1.0 / n as f64);
    s
}

/// Full sandwich estimate at a fitted model.
pub fn sandwich(
    fit: &FitResult,
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
) -> Result<SandwichEstimate> {
    let parts = sandwich_parts(fit, data, loss, kernel)?;
    let p = data.p();
    let a = a_from_parts(&parts, p);
    let sig = sigma_from_parts(&parts, p);
    let cond = a.cond1();
    let a_inv = a.inverse()?;
    let cov = a_inv.matmul(&sig).matmul(&a_inv.transpose());
    let mut cov_rows = matrix_to_rows(&cov);
    let n = data.n() as f64;
    for row in &mut cov_rows {
        for v in row {
            *v /= n;
        }
    }
    // exact symmetry of the reported covariance
    for i in 0..p {
        for j in (i + 1)..p {
            let m = 0.5 * (cov_rows[i][j] + cov_rows[j][i]);
            cov_rows[i][j] = m;
            cov_rows[j][i] = m;
        }
    }
    Ok(SandwichEstimate {
        a_hat: matrix_to_rows(&a),
        sigma_hat: matrix_to_rows(&sig),
        cov_beta: cov_rows,
        condition_number: cond,
        near_singular: cond > NEAR_SINGULAR_COND,
    })
}

/// Wald test of `beta_(2) = 0` for the 0-based coordinate set `restriction`.
pub fn wald_test(
    fit: &FitResult,
    sandwich: &SandwichEstimate,
    restriction: &[usize],
) -> Result<TestResult> {
    let p = fit.beta_hat.len();
    validate_restriction(restriction, p)?;
    let k = restriction.len();
    let cov = rows_to_matrix(&sandwich.cov_beta);
    let block = cov.block(restriction);
    let b2: Vec<f64> = restriction.iter().map(|&j| fit.beta_hat[j]).collect();
    let sol = block.solve(&b2).map_err(|_| GplmError::SingularMatrix {
        cond: block.cond1(),
    })?;
    let statistic: f64 = b2.iter().zip(&sol).map(|(a, b)| a * b).sum();
    // one degree of freedom goes through the squared-normal identity, which
    // is better conditioned in the tail than the incomplete-gamma route
    let p_value = if statistic <= 0.0 {
        1.0
    } else if k == 1 {
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        2.0 * normal.sf(statistic.sqrt())
    } else {
        ChiSquared::new(k as f64).expect("positive dof").sf(statistic)
    };
    Ok(TestResult {
        statistic,
        p_value,
        method: TestMethod::Wald,
        df: Some(k),
        spectrum: None,
    })
}

/// Robust discrepancy test of `beta_(2) = 0`.
///
/// Fits the full and the null model (restricted coordinates pinned to zero)
/// with the same loss and returns
/// `Lambda = 2 [sum_i rho(null) - sum_i rho(full)] >= 0` with a p-value from
/// the weighted-chi-square limit; the weight spectrum is evaluated at the
/// full-model fit.
pub fn lambda_test(
    data: &Dataset,
    loss: &LossModel,
    kernel: &KernelSpec,
    restriction: &[usize],
    search: &BetaSearchSpec,
    seed: u64,
) -> Result<(TestResult, FitResult, FitResult)> {
    validate_restriction(restriction, data.p())?;
    let full = fit_beta(data, loss, kernel, search)?;
    let null = fit_beta_restricted(data, loss, kernel, search, restriction)?;
    let n = data.n() as f64;
    let statistic = 2.0 * n * (null.objective - full.objective);
    if statistic < LAMBDA_NEG_TOL {
        return Err(GplmError::OptimizationFailure(format!(
            "null fit beat the full fit: discrepancy {statistic:.3e}"
        )));
    }
    let sw = sandwich(&full, data, loss, kernel)?;
    let spectrum = lambda_spectrum(&sw, restriction)?;
    let p_value = weighted_chi_square_tail(&spectrum, statistic.max(0.0), seed);
    Ok((
        TestResult {
            statistic,
            p_value,
            method: TestMethod::Lambda,
            df: None,
            spectrum: Some(spectrum),
        },
        full,
        null,
    ))
}

/// Mixture weights: eigenvalues of `C22^{1/2} A_{22.1} C22^{1/2}` with
/// `C = A^{-1} Sigma (A^{-1})'` and `A_{22.1} = A22 - A21 A11^{-1} A12`.
fn lambda_spectrum(sw: &SandwichEstimate, restriction: &[usize]) -> Result<Vec<f64>> {
    let p = sw.a_hat.len();
    let free: Vec<usize> = (0..p).filter(|j| !restriction.contains(j)).collect();
    let a = rows_to_matrix(&sw.a_hat);
    let a22_1 = if free.is_empty() {
        a.block(restriction)
    } else {
        let a11 = a.block(&free);
        let a12 = a.block_rect(&free, restriction);
        let a21 = a.block_rect(restriction, &free);
        let a11_inv = a11.inverse()?;
        // A22 - A21 A11^{-1} A12
        let k = restriction.len();
        let f = free.len();
        let mut out = a.block(restriction);
        for r in 0..k {
            for c in 0..k {
                let mut acc = 0.0;
                for i in 0..f {
                    for j in 0..f {
                        acc += a21[r][i] * a11_inv.get(i, j) * a12[j][c];
                    }
                }
                out.set(r, c, out.get(r, c) - acc);
            }
        }
        out
    };
    // n * C22 block of the asymptotic covariance
    let cov = rows_to_matrix(&sw.cov_beta);
    let c22 = cov.block(restriction);
    // symmetric square root of C22
    let (eig, vec) = c22.eigh();
    let k = restriction.len();
    let mut root = Mat::zeros(k);
    for i in 0..k {
        for j in 0..k {
            let mut acc = 0.0;
            for (m, ev) in eig.iter().enumerate() {
                acc += vec.get(i, m) * ev.max(0.0).sqrt() * vec.get(j, m);
            }
            root.set(i, j, acc);
        }
    }
    let m = root.matmul(&a22_1).matmul(&root);
    // n-scaling: Lambda ~ n * U' A22.1 U with U ~ N(0, C/n); the covariance
    // above is already the finite-sample one, so weights carry the n factor
    // implicitly through cov_beta.
    let (mut weights, _) = m.eigh();
    for w in &mut weights {
        *w = w.max(0.0);
    }
    weights.sort_by(f64::total_cmp);
    Ok(weights)
}

/// `P(sum_k w_k Z_k^2 > q)` by seeded Monte Carlo with a fixed shard layout.
fn weighted_chi_square_tail(weights: &[f64], q: f64, seed: u64) -> f64 {
    let per_shard = LAMBDA_MC_DRAWS / LAMBDA_MC_SHARDS;
    let counts = par::map_indexed(LAMBDA_MC_SHARDS, |shard| {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x4c41_4d42_0000_0000 | shard as u64);
        let mut exceed = 0usize;
        for _ in 0..per_shard {
            let mut total = 0.0;
            for &w in weights {
                let z = standard_normal(&mut rng);
                total += w * z * z;
            }
            if total > q {
                exceed += 1;
            }
        }
        exceed
    });
    let exceed: usize = counts.iter().sum();
    exceed as f64 / (per_shard * LAMBDA_MC_SHARDS) as f64
}

fn standard_normal(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    crate::rng::normal_quantile(u)
}

fn validate_restriction(restriction: &[usize], p: usize) -> Result<()> {
    if restriction.is_empty() {
        return Err(GplmError::InvalidSpec("empty restriction set".into()));
    }
    let mut seen = vec![false; p];
    for &j in restriction {
        if j >= p {
            return Err(GplmError::InvalidSpec(format!(
                "restricted coordinate {j} out of range for p = {p}"
            )));
        }
        if seen[j] {
            return Err(GplmError::InvalidSpec(format!(
                "restricted coordinate {j} listed twice"
            )));
        }
        seen[j] = true;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::Family;
    use crate::link::Link;
    use crate::loss::LossSpec;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};
    use statrs::distribution::{ContinuousCDF, Normal};

    fn unif(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn qal() -> LossModel {
        LossModel::new(LossSpec::classical(
            Family::Binomial { trials: 1 },
            Link::Logit,
        ))
        .unwrap()
    }

    /// Logistic sample with constant smoothing variable cells and p columns.
    fn sample(rng: &mut ChaCha8Rng, n: usize, beta: &[f64]) -> Dataset {
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut t = Vec::new();
        for _ in 0..n {
            let ti = (1.0 + (unif(rng, 0.0, 10.0).floor()).min(9.0)) / 10.0;
            let row: Vec<f64> = (0..beta.len()).map(|_| unif(rng, -1.0, 1.0)).collect();
            let lin: f64 =
                row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + 0.4 * (3.0 * ti).sin();
            let pr = Link::Logit.h(lin);
            y.push(if unif(rng, 0.0, 1.0) < pr { 1.0 } else { 0.0 });
            x.push(row);
            t.push(ti);
        }
        Dataset::new(y, x, t).unwrap()
    }

    fn quick_search() -> BetaSearchSpec {
        BetaSearchSpec {
            halfwidth: 2.5,
            step: 0.1,
            refine_tol: Some(1e-4),
            ..Default::default()
        }
    }

    #[test]
    fn glm_information_oracle_with_constant_t() {
        // all t equal: the local level is the profiled intercept, so A_hat
        // must equal the intercept-profiled GLM information
        // n^{-1} sum H'(u_i) (x_i - xbar_w)(x_i - xbar_w)'
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 60;
        let mut y = Vec::new();
        let mut x = Vec::new();
        for _ in 0..n {
            let xi = unif(&mut rng, -1.5, 1.5);
            let pr = Link::Logit.h(0.8 * xi + 0.3);
            y.push(if unif(&mut rng, 0.0, 1.0) < pr { 1.0 } else { 0.0 });
            x.push(vec![xi]);
        }
        let data = Dataset::new(y, x, vec![0.5; n]).unwrap();
        let loss = qal();
        let kernel = KernelSpec::triangular(0.2).unwrap();
        let fit = fit_beta(&data, &loss, &kernel, &quick_search()).unwrap();
        let a = estimate_a_matrix(&fit, &data, &loss, &kernel).unwrap();

        // oracle: intercept-profiled information at the same (beta, level)
        let level = fit.eta_at[0].1;
        let mut sw = 0.0;
        let mut sx = 0.0;
        for i in 0..n {
            let hp = Link::Logit.h_deriv(fit.beta_hat[0] * data.x_row(i)[0] + level);
            sw += hp;
            sx += hp * data.x_row(i)[0];
        }
        let xbar = sx / sw;
        let mut info = 0.0;
        for i in 0..n {
            let hp = Link::Logit.h_deriv(fit.beta_hat[0] * data.x_row(i)[0] + level);
            info += hp * (data.x_row(i)[0] - xbar).powi(2);
        }
        info /= n as f64;
        assert!(
            (a[0][0] - info).abs() < 1e-8,
            "A {} vs oracle {info}",
            a[0][0]
        );
    }

    #[test]
    fn sigma_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = sample(&mut rng, 20, &[1.0]);
        let loss = qal();
        let kernel = KernelSpec::triangular(0.35).unwrap();
        let fit = fit_beta(&data, &loss, &kernel, &quick_search()).unwrap();
        let sig = estimate_sigma_matrix(&fit, &data, &loss, &kernel).unwrap();
        // direct oracle recomputation through public derivatives
        let mut want = 0.0;
        for i in 0..data.n() {
            let d = crate::smoothing::local_fit_dbeta(
                &fit.beta_hat,
                data.t()[i],
                &data,
                &loss,
                &kernel,
            )
            .unwrap();
            let lf = crate::smoothing::local_fit(
                &fit.beta_hat,
                data.t()[i],
                &data,
                &loss,
                &kernel,
                &ScalarSearchSpec::default(),
            )
            .unwrap();
            let u = data.x_row(i)[0] * fit.beta_hat[0] + lf.estimate;
            let psi = loss.psi(data.y()[i], u).unwrap();
            let z = data.x_row(i)[0] + d[0];
            want += (psi * 1.0 * z).powi(2);
        }
        want /= data.n() as f64;
        assert!((sig[0][0] - want).abs() < 1e-12, "{} vs {want}", sig[0][0]);
        assert!(sig[0][0] >= 0.0);
    }

    #[test]
    fn sandwich_symmetry_and_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = sample(&mut rng, 80, &[1.0, -0.5]);
        let loss = qal();
        let kernel = KernelSpec::triangular(0.35).unwrap();
        let fit = fit_beta(&data, &loss, &kernel, &quick_search()).unwrap();
        let sw = sandwich(&fit, &data, &loss, &kernel).unwrap();
        let p = 2;
        for i in 0..p {
            for j in 0..p {
                assert!((sw.cov_beta[i][j] - sw.cov_beta[j][i]).abs() < 1e-10);
                assert!((sw.sigma_hat[i][j] - sw.sigma_hat[j][i]).abs() < 1e-10);
            }
        }
        let (eig, _) = rows_to_matrix(&sw.cov_beta).eigh();
        let trace: f64 = (0..p).map(|i| sw.cov_beta[i][i]).sum();
        for e in eig {
            assert!(e >= -1e-12 * trace.abs());
        }
        assert!(!sw.near_singular);
    }

    #[test]
    fn duplication_halves_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = sample(&mut rng, 50, &[1.0]);
        let mut y2 = data.y().to_vec();
        y2.extend_from_slice(data.y());
        let mut x2: Vec<Vec<f64>> = (0..data.n()).map(|i| data.x_row(i).to_vec()).collect();
        x2.extend((0..data.n()).map(|i| data.x_row(i).to_vec()));
        let mut t2 = data.t().to_vec();
        t2.extend_from_slice(data.t());
        let doubled = Dataset::new(y2, x2, t2).unwrap();
        let loss = qal();
        let kernel = KernelSpec::triangular(0.35).unwrap();
        let fit = fit_beta(&data, &loss, &kernel, &quick_search()).unwrap();
        let sw1 = sandwich(&fit, &data, &loss, &kernel).unwrap();
        // same estimate evaluated on the doubled sample
        let fit2 = FitResult {
            eta_at: Vec::new(),
            ..fit.clone()
        };
        let sw2 = sandwich(&fit2, &doubled, &loss, &kernel).unwrap();
        assert!((sw1.a_hat[0][0] - sw2.a_hat[0][0]).abs() < 1e-12);
        assert!((sw1.sigma_hat[0][0] - sw2.sigma_hat[0][0]).abs() < 1e-12);
        assert!(
            (sw2.cov_beta[0][0] - 0.5 * sw1.cov_beta[0][0]).abs() < 1e-8 * sw1.cov_beta[0][0]
        );
    }

    #[test]
    fn wald_zero_estimate_gives_unit_p() {
        let fit = FitResult {
            beta_hat: vec![0.7, 0.0],
            eta_at: vec![],
            objective: 0.0,
            score_norm: 0.0,
            cov_beta: None,
            se_beta: None,
            boundary_local_fits: 0,
            beta_on_boundary: false,
            loss_label: "qal".into(),
            kernel: KernelSpec::triangular(0.1).unwrap(),
        };
        let sw = SandwichEstimate {
            a_hat: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            sigma_hat: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            cov_beta: vec![vec![0.01, 0.0], vec![0.0, 0.04]],
            condition_number: 1.0,
            near_singular: false,
        };
        let t = wald_test(&fit, &sw, &[1]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn wald_scalar_matches_squared_normal_tail() {
        let fit = FitResult {
            beta_hat: vec![0.42],
            eta_at: vec![],
            objective: 0.0,
            score_norm: 0.0,
            cov_beta: None,
            se_beta: None,
            boundary_local_fits: 0,
            beta_on_boundary: false,
            loss_label: "qal".into(),
            kernel: KernelSpec::triangular(0.1).unwrap(),
        };
        let se: f64 = 0.2;
        let sw = SandwichEstimate {
            a_hat: vec![vec![1.0]],
            sigma_hat: vec![vec![1.0]],
            cov_beta: vec![vec![se * se]],
            condition_number: 1.0,
            near_singular: false,
        };
        let t = wald_test(&fit, &sw, &[0]).unwrap();
        let z = 0.42 / se;
        assert!((t.statistic - z * z).abs() < 1e-12);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let p_norm = 2.0 * (1.0 - normal.cdf(z.abs()));
        assert!((t.p_value - p_norm).abs() < 1e-12);
    }

    #[test]
    fn wald_singular_block_is_an_error() {
        let fit = FitResult {
            beta_hat: vec![0.1, 0.2],
            eta_at: vec![],
            objective: 0.0,
            score_norm: 0.0,
            cov_beta: None,
            se_beta: None,
            boundary_local_fits: 0,
            beta_on_boundary: false,
            loss_label: "qal".into(),
            kernel: KernelSpec::triangular(0.1).unwrap(),
        };
        let sw = SandwichEstimate {
            a_hat: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            sigma_hat: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            cov_beta: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            condition_number: 1.0,
            near_singular: false,
        };
        assert!(wald_test(&fit, &sw, &[0, 1]).is_err());
    }

    #[test]
    fn lambda_nonnegative_and_zero_when_null_true() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // second covariate has no effect: the null fit pins it at its
        // unrestricted optimum region
        let data = sample(&mut rng, 70, &[1.0, 0.0]);
        let loss = qal();
        let kernel = KernelSpec::triangular(0.35).unwrap();
        let (t, full, null) =
            lambda_test(&data, &loss, &kernel, &[1], &quick_search(), 99).unwrap();
        assert!(t.statistic >= LAMBDA_NEG_TOL);
        assert!(null.objective + 1e-12 >= full.objective);
        assert!(t.p_value >= 0.0 && t.p_value <= 1.0);
        assert!(t.spectrum.is_some());
    }

    #[test]
    fn lambda_detects_strong_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let data = sample(&mut rng, 200, &[0.8, 1.6]);
        let loss = qal();
        let kernel = KernelSpec::triangular(0.35).unwrap();
        let (t, _, _) = lambda_test(&data, &loss, &kernel, &[1], &quick_search(), 7).unwrap();
        assert!(t.statistic > 0.0);
        assert!(t.p_value < 0.01, "p = {}", t.p_value);
    }

    #[test]
    fn weighted_tail_matches_chi_square_for_unit_weight() {
        let chi = ChiSquared::new(1.0).unwrap();
        for q in [0.5, 1.0, 3.84] {
            let mc = weighted_chi_square_tail(&[1.0], q, 123);
            let exact = 1.0 - chi.cdf(q);
            assert!((mc - exact).abs() < 0.01, "q={q}: {mc} vs {exact}");
        }
    }

    #[test]
    fn restriction_validation() {
        let fit = FitResult {
            beta_hat: vec![0.1],
            eta_at: vec![],
            objective: 0.0,
            score_norm: 0.0,
            cov_beta: None,
            se_beta: None,
            boundary_local_fits: 0,
            beta_on_boundary: false,
            loss_label: "qal".into(),
            kernel: KernelSpec::triangular(0.1).unwrap(),
        };
        let sw = SandwichEstimate {
            a_hat: vec![vec![1.0]],
            sigma_hat: vec![vec![1.0]],
            cov_beta: vec![vec![1.0]],
            condition_number: 1.0,
            near_singular: false,
        };
        assert!(wald_test(&fit, &sw, &[]).is_err());
        assert!(wald_test(&fit, &sw, &[3]).is_err());
    }
}
