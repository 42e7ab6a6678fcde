//! Robust cross-validation bandwidth selection.
//!
//! A random holdout split: the model is fit on the training part for every
//! candidate bandwidth, and each candidate is scored by the robust loss of
//! the held-out observations at the training fit. The loss of an estimator
//! that bounds residuals stays bounded, so gross outliers in the validation
//! set cannot dominate the criterion the way squared error would.

use crate::data::Dataset;
use crate::error::{GplmError, Result};
use crate::kernel::{KernelShape, KernelSpec};
use crate::loss::LossModel;
use crate::par;
use crate::profile::{fit_beta, BetaSearchSpec};
use crate::rng::StreamRng;
use crate::smoothing::{ScalarSearchSpec, Station};

/// Relative slack within which validation losses count as tied (ties go to
/// the larger, smoother bandwidth).
const TIE_REL_TOL: f64 = 1e-9;
/// Stream id offset for split sampling.
const SPLIT_STREAM: u64 = 0x4356_0000_0000_0000;

/// Cross-validation layout.
#[derive(Debug, Clone)]
pub struct CvSpec {
    /// Holdout fraction in (0, 1).
    pub alpha: f64,
    /// Candidate bandwidths, strictly ascending.
    pub candidates: Vec<f64>,
    pub seed: u64,
    /// Random splits to average (1 reproduces the single-split procedure).
    pub splits: usize,
}

impl CvSpec {
    pub fn new(alpha: f64, candidates: Vec<f64>, seed: u64, splits: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(GplmError::InvalidSpec(format!(
                "holdout fraction must lie in (0, 1), got {alpha}"
            )));
        }
        if candidates.is_empty() {
            return Err(GplmError::InvalidSpec("no candidate bandwidths".into()));
        }
        if !candidates.windows(2).all(|w| w[0] < w[1]) {
            return Err(GplmError::InvalidSpec(
                "candidate bandwidths must be strictly ascending".into(),
            ));
        }
        if candidates.iter().any(|&h| !(h > 0.0)) {
            return Err(GplmError::InvalidSpec(
                "candidate bandwidths must be positive".into(),
            ));
        }
        if splits == 0 {
            return Err(GplmError::InvalidSpec("splits must be at least 1".into()));
        }
        Ok(CvSpec {
            alpha,
            candidates,
            seed,
            splits,
        })
    }

    /// The default single 80/20 split.
    pub fn holdout(candidates: Vec<f64>, seed: u64) -> Result<Self> {
        Self::new(0.2, candidates, seed, 1)
    }
}

/// Selection outcome with the per-candidate validation losses.
#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub selected: f64,
    /// Candidate bandwidths, aligned with `losses`.
    pub candidates: Vec<f64>,
    /// Validation loss per candidate, averaged over splits; infinite entries
    /// mean every split failed for that bandwidth (empty windows).
    pub losses: Vec<f64>,
    /// Training index sets per split (canonical dataset order).
    pub train_sets: Vec<Vec<usize>>,
}

/// Select a bandwidth by robust holdout cross-validation.
///
/// For each split and candidate `h`, the two-step estimator is fit on the
/// training part; the candidate's score is
/// `sum_{i in validation} rho(y_i, x_i' beta_hat + eta_hat(t_i)) w2(x_i)`
/// with the level evaluated through training-set windows. A candidate whose
/// windows are empty at some validation point gets an infinite score for
/// that split; the selection fails only if every candidate is infinite.
pub fn robust_cv(
    data: &Dataset,
    loss: &LossModel,
    shape: KernelShape,
    cv: &CvSpec,
    search: &BetaSearchSpec,
) -> Result<CvOutcome> {
    let n = data.n();
    if n < 3 {
        return Err(GplmError::Design(
            "cross-validation needs at least 3 observations".into(),
        ));
    }
    let n_train = (((1.0 - cv.alpha) * n as f64).round() as usize).clamp(1, n - 1);
    let mut totals = vec![0.0f64; cv.candidates.len()];
    let mut train_sets = Vec::with_capacity(cv.splits);
    for split in 0..cv.splits {
        let mut rng = StreamRng::new(cv.seed, SPLIT_STREAM | split as u64);
        let train_idx = rng.sample_without_replacement(n, n_train);
        let mut is_train = vec![false; n];
        for &i in &train_idx {
            is_train[i] = true;
        }
        let valid_idx: Vec<usize> = (0..n).filter(|&i| !is_train[i]).collect();
        let train = data.subset(&train_idx)?;
        let split_losses = par::map_indexed(cv.candidates.len(), |k| {
            candidate_loss(data, &train, &valid_idx, loss, shape, cv.candidates[k], search)
        });
        for (t, l) in totals.iter_mut().zip(&split_losses) {
            *t += l;
        }
        train_sets.push(train_idx);
    }
    let losses: Vec<f64> = totals
        .into_iter()
        .map(|t| t / cv.splits as f64)
        .collect();
    if losses.iter().all(|l| !l.is_finite()) {
        return Err(GplmError::OptimizationFailure(
            "every candidate bandwidth failed on the validation set".into(),
        ));
    }
    // ascending scan; ties go to the larger bandwidth
    let mut best = 0usize;
    for k in 1..losses.len() {
        if losses[k] <= losses[best] + TIE_REL_TOL * losses[best].abs().max(1.0) {
            best = k;
        }
    }
    Ok(CvOutcome {
        selected: cv.candidates[best],
        candidates: cv.candidates.clone(),
        losses,
        train_sets,
    })
}

fn candidate_loss(
    data: &Dataset,
    train: &Dataset,
    valid_idx: &[usize],
    loss: &LossModel,
    shape: KernelShape,
    h: f64,
    search: &BetaSearchSpec,
) -> f64 {
    let Ok(kernel) = KernelSpec::new(shape, h) else {
        return f64::INFINITY;
    };
    let Ok(fit) = fit_beta(train, loss, &kernel, search) else {
        return f64::INFINITY;
    };
    let preds_train = train.predictors(&fit.beta_hat);
    let scalar = ScalarSearchSpec::default();
    let mut total = 0.0;
    for &i in valid_idx {
        let t = data.t()[i];
        let Ok(st) = Station::at(t, train, loss, &kernel) else {
            return f64::INFINITY; // empty training window at this point
        };
        let level = st.fit(train, loss, &preds_train, &scalar).estimate;
        let pred: f64 = data
            .x_row(i)
            .iter()
            .zip(&fit.beta_hat)
            .map(|(x, b)| x * b)
            .sum();
        let w2 = loss.spec().w2.eval_row(data.x_row(i));
        total += loss.rho_raw(data.y()[i], pred + level) * w2;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::Family;
    use crate::link::Link;
    use crate::loss::LossSpec;
    use crate::rng::StreamRng;

    fn qal() -> LossModel {
        LossModel::new(LossSpec::classical(
            Family::Binomial { trials: 1 },
            Link::Logit,
        ))
        .unwrap()
    }

    fn search() -> BetaSearchSpec {
        BetaSearchSpec {
            halfwidth: 2.0,
            step: 0.2,
            refine_tol: Some(1e-3),
            ..Default::default()
        }
    }

    fn sample(seed: u64, n: usize) -> Dataset {
        let mut rng = StreamRng::new(seed, 0);
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut t = Vec::new();
        for _ in 0..n {
            let ti = (1.0 + (rng.uniform() * 10.0).floor().min(9.0)) / 10.0;
            let xi = rng.uniform_range(-1.0, 1.0);
            let pr = Link::Logit.h(1.2 * xi + 0.5 * (3.0 * ti).sin());
            y.push(rng.bernoulli(pr));
            x.push(vec![xi]);
            t.push(ti);
        }
        Dataset::new(y, x, t).unwrap()
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(CvSpec::new(0.0, vec![0.1], 1, 1).is_err());
        assert!(CvSpec::new(0.2, vec![], 1, 1).is_err());
        assert!(CvSpec::new(0.2, vec![0.2, 0.1], 1, 1).is_err());
        assert!(CvSpec::new(0.2, vec![0.1], 1, 0).is_err());
    }

    #[test]
    fn single_candidate_returned_unconditionally() {
        let data = sample(3, 60);
        let loss = qal();
        let cv = CvSpec::holdout(vec![0.25], 17).unwrap();
        let out = robust_cv(&data, &loss, KernelShape::Triangular, &cv, &search()).unwrap();
        assert_eq!(out.selected, 0.25);
        assert_eq!(out.losses.len(), 1);
        assert!(out.losses[0].is_finite());
    }

    #[test]
    fn selection_is_deterministic() {
        let data = sample(5, 70);
        let loss = qal();
        let cv = CvSpec::holdout(vec![0.15, 0.25, 0.4], 23).unwrap();
        let a = robust_cv(&data, &loss, KernelShape::Triangular, &cv, &search()).unwrap();
        let b = robust_cv(&data, &loss, KernelShape::Triangular, &cv, &search()).unwrap();
        assert_eq!(a.selected, b.selected);
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.train_sets, b.train_sets);
    }

    #[test]
    fn selected_is_a_candidate_and_losses_bounded() {
        let data = sample(9, 50);
        let loss = qal();
        let cv = CvSpec::holdout(vec![0.2, 0.3, 0.5], 31).unwrap();
        let out = robust_cv(&data, &loss, KernelShape::Triangular, &cv, &search()).unwrap();
        assert!(cv.candidates.contains(&out.selected));
        for l in &out.losses {
            assert!(l.is_finite() || *l == f64::INFINITY);
        }
    }

    #[test]
    fn noise_free_constant_level_ties_to_largest() {
        // every response sits exactly at the saturated mean of a constant
        // level: each candidate fits perfectly and the tie rule picks the
        // smoothest
        let mut rng = StreamRng::new(77, 0);
        let n = 40;
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut t = Vec::new();
        for i in 0..n {
            y.push(5.0);
            x.push(vec![rng.uniform_range(-1.0, 1.0)]);
            t.push((1 + i % 10) as f64 / 10.0);
        }
        let data = Dataset::new(y, x, t).unwrap();
        let loss = LossModel::new(LossSpec::classical(
            Family::Binomial { trials: 10 },
            Link::Logit,
        ))
        .unwrap();
        let cv = CvSpec::new(0.2, vec![2.0, 3.0, 4.0], 13, 1).unwrap();
        let out = robust_cv(&data, &loss, KernelShape::Triangular, &cv, &search()).unwrap();
        let spread = out
            .losses
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        assert!(spread.1 - spread.0 < 1e-6, "losses {:?}", out.losses);
        assert_eq!(out.selected, 4.0);
    }

    #[test]
    fn impossible_candidate_gets_infinite_loss() {
        // continuous index points: a tiny bandwidth leaves validation points
        // outside every training window
        let mut rng = StreamRng::new(21, 0);
        let n = 40;
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut t = Vec::new();
        for _ in 0..n {
            let xi = rng.uniform_range(-1.0, 1.0);
            let ti = rng.uniform();
            let pr = Link::Logit.h(1.2 * xi);
            y.push(rng.bernoulli(pr));
            x.push(vec![xi]);
            t.push(ti);
        }
        let data = Dataset::new(y, x, t).unwrap();
        let loss = qal();
        let cv = CvSpec::holdout(vec![1e-7, 0.3], 41).unwrap();
        let out = robust_cv(&data, &loss, KernelShape::Triangular, &cv, &search()).unwrap();
        assert_eq!(out.selected, 0.3);
        assert!(out.losses[0].is_infinite());
    }
}
