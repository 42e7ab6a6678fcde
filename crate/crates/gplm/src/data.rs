//! Sample container.
//!
//! Observations are stored in a canonical order (sorted by `t`, then by the
//! covariate row, then by the response). This makes every downstream sum
//! independent of the input ordering bit for bit, and turns smoothing windows
//! into contiguous index ranges. The original row order is retained for
//! output mapping.

use std::ops::Range;

use crate::error::{GplmError, Result};

/// Ground truth attached to simulated datasets.
#[derive(Debug, Clone)]
pub struct Truth {
    pub beta: Vec<f64>,
    /// True smooth component at each (canonical-order) sample point.
    pub eta: Vec<f64>,
}

/// A sample of `n` observations `(y_i, x_i, t_i)` with `x_i` of length `p`.
#[derive(Debug, Clone)]
pub struct Dataset {
    n: usize,
    p: usize,
    y: Vec<f64>,
    /// Row-major `n x p` covariates in canonical order.
    x: Vec<f64>,
    t: Vec<f64>,
    /// Original input position of each canonical row.
    orig_index: Vec<usize>,
    /// Distinct `t` values with their contiguous canonical index ranges.
    groups: Vec<(f64, Range<usize>)>,
    truth: Option<Truth>,
}

impl Dataset {
    /// Build a dataset from response, covariate rows and smoothing variable.
    pub fn new(y: Vec<f64>, x_rows: Vec<Vec<f64>>, t: Vec<f64>) -> Result<Self> {
        Self::with_truth(y, x_rows, t, None)
    }

    pub fn with_truth(
        y: Vec<f64>,
        x_rows: Vec<Vec<f64>>,
        t: Vec<f64>,
        truth: Option<Truth>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(GplmError::Design("no observations".into()));
        }
        if x_rows.len() != n || t.len() != n {
            return Err(GplmError::Design(format!(
                "length mismatch: {} responses, {} covariate rows, {} index points",
                n,
                x_rows.len(),
                t.len()
            )));
        }
        let p = x_rows[0].len();
        if p == 0 {
            return Err(GplmError::Design("empty covariate rows".into()));
        }
        for (i, row) in x_rows.iter().enumerate() {
            if row.len() != p {
                return Err(GplmError::Design(format!(
                    "covariate row {i} has {} entries, expected {p}",
                    row.len()
                )));
            }
            if !row.iter().all(|v| v.is_finite()) {
                return Err(GplmError::Design(format!("non-finite covariate in row {i}")));
            }
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(GplmError::Design(format!("non-finite response {v}")));
        }
        if let Some(v) = t.iter().find(|v| !v.is_finite()) {
            return Err(GplmError::Design(format!("non-finite index point {v}")));
        }
        if let Some(ref tr) = truth {
            if tr.eta.len() != n {
                return Err(GplmError::Design("truth length mismatch".into()));
            }
        }

        // canonical order: (t, x row, y), total order on floats
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            t[a].total_cmp(&t[b])
                .then_with(|| {
                    for k in 0..p {
                        let c = x_rows[a][k].total_cmp(&x_rows[b][k]);
                        if c != std::cmp::Ordering::Equal {
                            return c;
                        }
                    }
                    std::cmp::Ordering::Equal
                })
                .then_with(|| y[a].total_cmp(&y[b]))
        });

        let mut cy = Vec::with_capacity(n);
        let mut cx = Vec::with_capacity(n * p);
        let mut ct = Vec::with_capacity(n);
        let mut ceta = truth.as_ref().map(|_| Vec::with_capacity(n));
        for &i in &order {
            cy.push(y[i]);
            cx.extend_from_slice(&x_rows[i]);
            ct.push(t[i]);
            if let (Some(buf), Some(tr)) = (ceta.as_mut(), truth.as_ref()) {
                buf.push(tr.eta[i]);
            }
        }
        let truth = truth.map(|tr| Truth {
            beta: tr.beta,
            eta: ceta.unwrap(),
        });

        let mut groups = Vec::new();
        let mut start = 0usize;
        for i in 1..=n {
            if i == n || ct[i] != ct[start] {
                groups.push((ct[start], start..i));
                start = i;
            }
        }

        Ok(Dataset {
            n,
            p,
            y: cy,
            x: cx,
            t: ct,
            orig_index: order,
            groups,
            truth,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    /// Flat row-major covariate storage.
    pub fn x_flat(&self) -> &[f64] {
        &self.x
    }

    /// Original input position of canonical row `i`.
    pub fn orig_index(&self) -> &[usize] {
        &self.orig_index
    }

    pub fn truth(&self) -> Option<&Truth> {
        self.truth.as_ref()
    }

    /// Distinct index points with their canonical ranges.
    pub(crate) fn groups(&self) -> &[(f64, Range<usize>)] {
        &self.groups
    }

    /// Contiguous canonical index range with `|t_i - t| <= radius`.
    pub(crate) fn window(&self, t: f64, radius: f64) -> Range<usize> {
        let lo = self.t.partition_point(|&ti| ti < t - radius);
        let hi = self.t.partition_point(|&ti| ti <= t + radius);
        lo..hi
    }

    /// Linear predictor `x_i' beta` for every canonical row.
    pub(crate) fn predictors(&self, beta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(beta.len(), self.p);
        (0..self.n)
            .map(|i| {
                self.x_row(i)
                    .iter()
                    .zip(beta)
                    .map(|(xi, bi)| xi * bi)
                    .sum()
            })
            .collect()
    }

    /// Subset by canonical indices (used by the cross-validation splitter).
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        let y = idx.iter().map(|&i| self.y[i]).collect();
        let x_rows = idx.iter().map(|&i| self.x_row(i).to_vec()).collect();
        let t = idx.iter().map(|&i| self.t[i]).collect();
        let truth = self.truth.as_ref().map(|tr| Truth {
            beta: tr.beta.clone(),
            eta: idx.iter().map(|&i| tr.eta[i]).collect(),
        });
        Dataset::with_truth(y, x_rows, t, truth)
    }

    /// True x_i'beta + eta(t_i) when the dataset carries ground truth.
    pub fn true_predictor(&self, i: usize) -> Option<f64> {
        self.truth.as_ref().map(|tr| {
            self.x_row(i)
                .iter()
                .zip(&tr.beta)
                .map(|(x, b)| x * b)
                .sum::<f64>()
                + tr.eta[i]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_permutation_invariant() {
        let y = vec![1.0, 0.0, 1.0, 0.0];
        let x = vec![vec![0.3], vec![-1.0], vec![0.1], vec![2.0]];
        let t = vec![0.5, 0.2, 0.5, 0.1];
        let d1 = Dataset::new(y.clone(), x.clone(), t.clone()).unwrap();
        let perm = [2usize, 0, 3, 1];
        let d2 = Dataset::new(
            perm.iter().map(|&i| y[i]).collect(),
            perm.iter().map(|&i| x[i].clone()).collect(),
            perm.iter().map(|&i| t[i]).collect(),
        )
        .unwrap();
        assert_eq!(d1.y(), d2.y());
        assert_eq!(d1.t(), d2.t());
        assert_eq!(d1.x_flat(), d2.x_flat());
    }

    #[test]
    fn groups_collapse_equal_t() {
        let d = Dataset::new(
            vec![1.0, 0.0, 1.0],
            vec![vec![1.0], vec![2.0], vec![3.0]],
            vec![0.5, 0.1, 0.5],
        )
        .unwrap();
        assert_eq!(d.groups().len(), 2);
        assert_eq!(d.groups()[0].0, 0.1);
        assert_eq!(d.groups()[1].1, 1..3);
    }

    #[test]
    fn window_is_contiguous() {
        let d = Dataset::new(
            vec![0.0; 5],
            vec![vec![0.0]; 5],
            vec![0.1, 0.2, 0.3, 0.4, 0.5],
        )
        .unwrap();
        assert_eq!(d.window(0.3, 0.1001), 1..4);
        assert_eq!(d.window(0.0, 0.05), 0..0);
    }

    #[test]
    fn validation_errors() {
        assert!(Dataset::new(vec![], vec![], vec![]).is_err());
        assert!(Dataset::new(vec![1.0], vec![vec![f64::NAN]], vec![0.1]).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], vec![vec![1.0]], vec![0.1]).is_err());
    }

    #[test]
    fn orig_index_maps_back() {
        let t = vec![0.9, 0.1, 0.5];
        let d = Dataset::new(
            vec![0.0, 1.0, 2.0],
            vec![vec![0.0], vec![1.0], vec![2.0]],
            t.clone(),
        )
        .unwrap();
        for i in 0..3 {
            assert_eq!(d.t()[i], t[d.orig_index()[i]]);
        }
    }
}
