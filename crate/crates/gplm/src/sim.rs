//! Simulation studies and the Monte Carlo harness.
//!
//! Three data-generating processes with known truth:
//!
//! * **Study 1** — `x ~ U(-1, 1)`, `t` uniform on `{0.1, ..., 1.0}`,
//!   `y ~ Bi(10, p)` with `logit p = 3 x + exp(2 t) - 4`.
//! * **Study 2** — `x ~ N(0, 1)`, `t ~ N(1/2, 1/6)`, `y ~ Bi(10, p)` with
//!   `logit p = 2 x + 0.2`; gross outliers `(10, 0), (-10, 10), (-10, 10)`
//!   replace the first `k` observations.
//! * **Study 3** — `(x, t)` bivariate normal truncated to `t in [1/4, 3/4]`,
//!   binary response from a latent standard-logistic threshold at
//!   `2 x + 2 sin(4 pi t)`, with three contamination schemes: response
//!   replacement (C1), response replacement at ten high-signal design points
//!   (C2), and bad leverage points (C3).
//!
//! Replications derive their seeds from `(master seed, replication index)`,
//! so every estimator in a run sees identical data and reruns are
//! bit-reproducible for any thread count.

use crate::bandwidth::{robust_cv, CvSpec};
use crate::data::{Dataset, Truth};
use crate::error::{GplmError, Result};
use crate::family::Family;
use crate::kernel::{KernelShape, KernelSpec};
use crate::link::Link;
use crate::loss::{LossKind, LossModel, LossSpec};
use crate::par;
use crate::profile::{fit_beta, BetaSearchSpec, FitResult};
use crate::rng::{rep_seed, StreamRng};
use crate::score::{PsiHuber, ScorePhi};
use crate::weight::WeightFn;

/// Stream ids inside one replication seed.
const STREAM_DATA: u64 = 0;
const STREAM_CONTAM: u64 = 1;
/// Regeneration attempts base stream (C2 feasibility).
const STREAM_REGEN: u64 = 16;
/// Maximum whole-dataset regenerations for C2.
const MAX_REGEN: u64 = 200;
/// Runs fail when more than this fraction of replications fail.
const MAX_FAILURE_RATE: f64 = 0.10;

/// Which study to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    S1,
    S2,
    S3,
}

/// Contamination scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contamination {
    None,
    /// Study 2: replace the first `k` observations by gross outliers.
    S2Outliers(usize),
    /// Study 3: 10% of responses replaced by `Bi(1, 0.5)` draws.
    C1,
    /// Study 3: responses replaced by `Bi(1, 0.5)` at ten design points with
    /// conditional mean above 0.99.
    C2,
    /// Study 3: 10% of observations turned into bad leverage points
    /// (`x ~ N(10, 1)`, `y ~ Bi(1, 0.05)`).
    C3,
}

impl Contamination {
    pub fn label(&self) -> &'static str {
        match self {
            Contamination::None => "none",
            Contamination::S2Outliers(0) => "none",
            Contamination::S2Outliers(1) => "out1",
            Contamination::S2Outliers(2) => "out2",
            Contamination::S2Outliers(_) => "out3",
            Contamination::C1 => "c1",
            Contamination::C2 => "c2",
            Contamination::C3 => "c3",
        }
    }
}

/// A fully specified simulation scenario.
#[derive(Debug, Clone)]
pub struct StudySpec {
    pub study: Study,
    pub n: usize,
    pub contamination: Contamination,
    pub seed: u64,
    /// Study 2 index-variable variance (the reference setting reads
    /// `N(1/2, 1/6)` as variance 1/6).
    pub study2_t_var: f64,
}

impl StudySpec {
    pub fn new(study: Study, n: usize, contamination: Contamination, seed: u64) -> Result<Self> {
        let ok = match (study, contamination) {
            (_, Contamination::None) => true,
            (Study::S2, Contamination::S2Outliers(k)) => k <= 3,
            (Study::S3, Contamination::C1 | Contamination::C2 | Contamination::C3) => true,
            _ => false,
        };
        if !ok {
            return Err(GplmError::InvalidSpec(format!(
                "contamination {contamination:?} is not defined for {study:?}"
            )));
        }
        if n == 0 {
            return Err(GplmError::InvalidSpec("empty sample".into()));
        }
        if let Contamination::S2Outliers(k) = contamination {
            if k > n {
                return Err(GplmError::InvalidSpec(
                    "more outliers than observations".into(),
                ));
            }
        }
        Ok(StudySpec {
            study,
            n,
            contamination,
            seed,
            study2_t_var: 1.0 / 6.0,
        })
    }

    pub fn family(&self) -> Family {
        match self.study {
            Study::S1 | Study::S2 => Family::Binomial { trials: 10 },
            Study::S3 => Family::Binomial { trials: 1 },
        }
    }

    pub fn beta0(&self) -> f64 {
        match self.study {
            Study::S1 => 3.0,
            Study::S2 | Study::S3 => 2.0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.study {
            Study::S1 => "1",
            Study::S2 => "2",
            Study::S3 => "3",
        }
    }

    /// Draw one dataset for the replication seed (not the master seed).
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        match self.study {
            Study::S1 => gen_study1(self.n, seed),
            Study::S2 => {
                let k = match self.contamination {
                    Contamination::S2Outliers(k) => k,
                    _ => 0,
                };
                gen_study2(self.n, seed, k, self.study2_t_var)
            }
            Study::S3 => gen_study3(self.n, seed, self.contamination).map(|(d, _)| d),
        }
    }
}

/// Study 1 draw; the truth is `beta = 3`, `eta(t) = exp(2 t) - 4`.
pub fn gen_study1(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = StreamRng::new(seed, STREAM_DATA);
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut eta = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = rng.uniform_range(-1.0, 1.0);
        let ti = (1.0 + (rng.uniform() * 10.0).floor().min(9.0)) / 10.0;
        let e = (2.0 * ti).exp() - 4.0;
        let p = Link::Logit.h(3.0 * xi + e);
        y.push(rng.binomial(10, p));
        x.push(vec![xi]);
        t.push(ti);
        eta.push(e);
    }
    Dataset::with_truth(
        y,
        x,
        t,
        Some(Truth {
            beta: vec![3.0],
            eta,
        }),
    )
}

/// Study 2 draw with `k <= 3` gross outliers; truth `beta = 2`,
/// `eta(t) = 0.2`. The outliers replace `(x, y)` of the first `k` generated
/// rows, keeping their `t` draws.
pub fn gen_study2(n: usize, seed: u64, k_outliers: usize, t_var: f64) -> Result<Dataset> {
    if k_outliers > n.min(3) {
        return Err(GplmError::InvalidSpec(format!(
            "study 2 defines at most 3 outliers, got {k_outliers}"
        )));
    }
    let mut rng = StreamRng::new(seed, STREAM_DATA);
    let sd_t = t_var.sqrt();
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = rng.normal();
        let ti = 0.5 + sd_t * rng.normal();
        let p = Link::Logit.h(2.0 * xi + 0.2);
        y.push(rng.binomial(10, p));
        x.push(vec![xi]);
        t.push(ti);
    }
    const OUTLIERS: [(f64, f64); 3] = [(10.0, 0.0), (-10.0, 10.0), (-10.0, 10.0)];
    for (row, &(xo, yo)) in OUTLIERS.iter().enumerate().take(k_outliers) {
        x[row][0] = xo;
        y[row] = yo;
    }
    let eta = vec![0.2; n];
    Dataset::with_truth(
        y,
        x,
        t,
        Some(Truth {
            beta: vec![2.0],
            eta,
        }),
    )
}

/// Study 3 draw; returns the dataset and the number of extra regeneration
/// attempts C2 needed to find ten qualifying design points.
pub fn gen_study3(n: usize, seed: u64, contamination: Contamination) -> Result<(Dataset, u64)> {
    match contamination {
        Contamination::None | Contamination::C1 | Contamination::C2 | Contamination::C3 => {}
        other => {
            return Err(GplmError::InvalidSpec(format!(
                "contamination {other:?} is not defined for study 3"
            )))
        }
    }
    let mut attempt = 0u64;
    loop {
        let data_stream = if attempt == 0 {
            STREAM_DATA
        } else {
            STREAM_REGEN + 2 * attempt
        };
        let contam_stream = if attempt == 0 {
            STREAM_CONTAM
        } else {
            STREAM_REGEN + 2 * attempt + 1
        };
        match gen_study3_once(n, seed, data_stream, contam_stream, contamination)? {
            Some(data) => return Ok((data, attempt)),
            None => {
                attempt += 1;
                if attempt > MAX_REGEN {
                    return Err(GplmError::Simulation(format!(
                        "study 3 C2: no draw with ten qualifying design points after {MAX_REGEN} regenerations"
                    )));
                }
            }
        }
    }
}

fn gen_study3_once(
    n: usize,
    seed: u64,
    data_stream: u64,
    contam_stream: u64,
    contamination: Contamination,
) -> Result<Option<Dataset>> {
    let mut rng = StreamRng::new(seed, data_stream);
    let beta0 = 2.0;
    let sd_t = 1.0 / 6.0;
    let corr = 1.0 / 3.0f64.sqrt();
    let resid = (1.0 - corr * corr).sqrt();
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut eta = Vec::with_capacity(n);
    for _ in 0..n {
        // rejection sampling of the truncated bivariate normal
        let (xi, ti) = loop {
            let z1 = rng.normal();
            let z2 = rng.normal();
            let ti = 0.5 + sd_t * z1;
            if (0.25..=0.75).contains(&ti) {
                break (corr * z1 + resid * z2, ti);
            }
        };
        let e = 2.0 * (4.0 * std::f64::consts::PI * ti).sin();
        let eps = rng.logistic();
        y.push(if beta0 * xi + e + eps >= 0.0 { 1.0 } else { 0.0 });
        x.push(vec![xi]);
        t.push(ti);
        eta.push(e);
    }

    let mut crng = StreamRng::new(seed, contam_stream);
    match contamination {
        Contamination::None => {}
        Contamination::C1 => {
            for yi in y.iter_mut() {
                if crng.uniform() > 0.90 {
                    *yi = crng.bernoulli(0.5);
                }
            }
        }
        Contamination::C2 => {
            // ten design points with conditional mean above 0.99
            let mut qualifying: Vec<(f64, usize)> = (0..n)
                .filter_map(|i| {
                    let h = Link::Logit.h(beta0 * x[i][0] + eta[i]);
                    (h > 0.99).then_some((h, i))
                })
                .collect();
            if qualifying.len() < 10 {
                return Ok(None);
            }
            qualifying
                .sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
            for &(_, i) in qualifying.iter().take(10) {
                y[i] = crng.bernoulli(0.5);
            }
        }
        Contamination::C3 => {
            for i in 0..n {
                if crng.uniform() > 0.90 {
                    x[i][0] = 10.0 + crng.normal();
                    y[i] = crng.bernoulli(0.05);
                }
            }
        }
        Contamination::S2Outliers(_) => unreachable!("validated by caller"),
    }

    Dataset::with_truth(
        y,
        x,
        t,
        Some(Truth {
            beta: vec![beta0],
            eta,
        }),
    )
    .map(Some)
}

/// An estimator entry for the Monte Carlo comparison: loss kind plus the
/// covariate weight policy (weights are recompiled per dataset because the
/// median center is data dependent).
#[derive(Debug, Clone)]
pub struct EstimatorSpec {
    pub kind: LossKind,
    /// Use median-centered covariate weights (the robust default); the
    /// classical loss always runs unweighted.
    pub median_weights: bool,
}

impl EstimatorSpec {
    /// Classical quasi-likelihood, unit weights.
    pub fn qal() -> Self {
        EstimatorSpec {
            kind: LossKind::ClassicalQuasi,
            median_weights: false,
        }
    }

    /// Robust quasi-likelihood with Huber constant `c`.
    pub fn rql(c: f64) -> Result<Self> {
        Ok(EstimatorSpec {
            kind: LossKind::RobustQuasi(PsiHuber::new(c)?),
            median_weights: true,
        })
    }

    /// Modified likelihood with the Croux-Haesbroeck score.
    pub fn modified_ch(c: f64) -> Result<Self> {
        Ok(EstimatorSpec {
            kind: LossKind::ModifiedLikelihood(ScorePhi::croux_haesbroeck(c)?),
            median_weights: true,
        })
    }

    /// The reference trio: QAL, RQL(1.2), MOD(CH 0.5).
    pub fn reference_trio() -> Vec<Self> {
        vec![
            Self::qal(),
            Self::rql(PsiHuber::DEFAULT_C).expect("valid tuning"),
            Self::modified_ch(0.5).expect("valid tuning"),
        ]
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            LossKind::ClassicalQuasi => "qal",
            LossKind::RobustQuasi(_) => "rql",
            LossKind::ModifiedLikelihood(_) => "mod",
        }
    }

    /// Compile against a dataset (median weights come from its covariates).
    pub fn compile(&self, data: &Dataset, family: Family, link: Link) -> Result<LossModel> {
        let w = if self.median_weights {
            WeightFn::median_cauchy_from_data(data.x_flat(), data.p())
        } else {
            WeightFn::Unit
        };
        LossModel::new(LossSpec::new(self.kind, family, link, w.clone(), w))
    }
}

/// Bandwidth policy for a Monte Carlo run.
#[derive(Debug, Clone)]
pub enum BandwidthChoice {
    Fixed(f64),
    Cv(CvSpec),
}

/// One replication's outcome for one estimator.
#[derive(Debug, Clone)]
pub struct RepRecord {
    pub rep: usize,
    pub h: f64,
    pub beta_hat: f64,
    pub mse_eta: f64,
}

/// Monte Carlo summary for one estimator (a study-table row).
#[derive(Debug, Clone)]
pub struct McSummary {
    pub estimator: String,
    pub h_label: String,
    pub reps: usize,
    pub failures: usize,
    pub bias: f64,
    /// Sample standard deviation (NaN for a single replication).
    pub sd: f64,
    pub mse_beta: f64,
    pub mse_eta: f64,
    /// Per-replication records (successes only), ordered by replication.
    pub raw: Vec<RepRecord>,
}

/// Bias, SD and mean squared errors over replications.
pub fn metrics(beta_hats: &[f64], mse_etas: &[f64], beta0: f64) -> (f64, f64, f64, f64) {
    let r = beta_hats.len() as f64;
    let mean = beta_hats.iter().sum::<f64>() / r;
    let bias = mean - beta0;
    let sd = if beta_hats.len() >= 2 {
        (beta_hats.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    let mse_beta = beta_hats.iter().map(|b| (b - beta0).powi(2)).sum::<f64>() / r;
    let mse_eta = mse_etas.iter().sum::<f64>() / mse_etas.len() as f64;
    (bias, sd, mse_beta, mse_eta)
}

/// `n^{-1} sum_i (eta_hat(t_i) - eta0(t_i))^2` for a fitted replication.
pub fn mse_eta_of_fit(fit: &FitResult, data: &Dataset) -> Option<f64> {
    let truth = data.truth()?;
    let n = data.n();
    let mut total = 0.0;
    for (canon, &orig) in data.orig_index().iter().enumerate() {
        let diff = fit.eta_at[orig].1 - truth.eta[canon];
        total += diff * diff;
    }
    Some(total / n as f64)
}

/// Run the Monte Carlo comparison: every estimator sees the same `reps`
/// datasets drawn from `study`; failures are recorded and excluded, and the
/// run aborts if more than 10% of fits fail for some estimator.
pub fn run_monte_carlo(
    study: &StudySpec,
    estimators: &[EstimatorSpec],
    bandwidth: &BandwidthChoice,
    search: &BetaSearchSpec,
    reps: usize,
) -> Result<Vec<McSummary>> {
    if reps == 0 {
        return Err(GplmError::InvalidSpec("at least one replication".into()));
    }
    if estimators.is_empty() {
        return Err(GplmError::InvalidSpec("no estimators listed".into()));
    }
    let family = study.family();
    let link = Link::Logit;

    type RepOutcome = Vec<std::result::Result<RepRecord, String>>;
    let outcomes: Vec<Result<RepOutcome>> = par::map_indexed(reps, |rep| {
        let seed_r = rep_seed(study.seed, rep);
        let data = study.generate(seed_r)?;
        let mut per_est = Vec::with_capacity(estimators.len());
        for est in estimators {
            per_est.push(run_one(
                est, &data, family, link, bandwidth, search, rep, seed_r,
            ));
        }
        Ok(per_est)
    });

    let mut collected: Vec<Vec<std::result::Result<RepRecord, String>>> = Vec::with_capacity(reps);
    for o in outcomes {
        collected.push(o?);
    }

    let mut summaries = Vec::with_capacity(estimators.len());
    for (e, est) in estimators.iter().enumerate() {
        let mut raw = Vec::new();
        let mut failures = 0usize;
        for rep_out in &collected {
            match &rep_out[e] {
                Ok(rec) => raw.push(rec.clone()),
                Err(_) => failures += 1,
            }
        }
        if (failures as f64) > MAX_FAILURE_RATE * reps as f64 {
            let first_err = collected
                .iter()
                .find_map(|r| r[e].as_ref().err().cloned())
                .unwrap_or_default();
            return Err(GplmError::Simulation(format!(
                "estimator {} failed {failures}/{reps} replications (first: {first_err})",
                est.label()
            )));
        }
        let betas: Vec<f64> = raw.iter().map(|r| r.beta_hat).collect();
        let etas: Vec<f64> = raw.iter().map(|r| r.mse_eta).collect();
        let (bias, sd, mse_beta, mse_eta) = metrics(&betas, &etas, study.beta0());
        let h_label = match bandwidth {
            BandwidthChoice::Fixed(h) => format!("{h}"),
            BandwidthChoice::Cv(_) => "cv".to_string(),
        };
        summaries.push(McSummary {
            estimator: est.label().to_string(),
            h_label,
            reps: raw.len(),
            failures,
            bias,
            sd,
            mse_beta,
            mse_eta,
            raw,
        });
    }
    Ok(summaries)
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    est: &EstimatorSpec,
    data: &Dataset,
    family: Family,
    link: Link,
    bandwidth: &BandwidthChoice,
    search: &BetaSearchSpec,
    rep: usize,
    seed_r: u64,
) -> std::result::Result<RepRecord, String> {
    let loss = est.compile(data, family, link).map_err(|e| e.to_string())?;
    let h = match bandwidth {
        BandwidthChoice::Fixed(h) => *h,
        BandwidthChoice::Cv(cv) => {
            let cv_spec = CvSpec {
                seed: seed_r,
                ..cv.clone()
            };
            robust_cv(data, &loss, KernelShape::Triangular, &cv_spec, search)
                .map_err(|e| e.to_string())?
                .selected
        }
    };
    let kernel = KernelSpec::triangular(h).map_err(|e| e.to_string())?;
    let fit = fit_beta(data, &loss, &kernel, search).map_err(|e| e.to_string())?;
    let mse_eta = mse_eta_of_fit(&fit, data).ok_or("missing truth")?;
    Ok(RepRecord {
        rep,
        h,
        beta_hat: fit.beta_hat[0],
        mse_eta,
    })
}
