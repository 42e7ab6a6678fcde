//! Covariate weight functions that downweight leverage points.

/// Weight in `(0, 1]` applied per observation through its covariates.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightFn {
    /// Constant weight 1 (no downweighting).
    Unit,
    /// `w(x) = (1 + (x - center)^2)^{-1/2}` per coordinate, with `center` the
    /// sample median; coordinates multiply for vector covariates.
    MedianCauchy { center: Vec<f64> },
}

impl WeightFn {
    /// Median-centered weight built from the covariate columns of a sample
    /// (`x` row-major with `p` columns).
    pub fn median_cauchy_from_data(x: &[f64], p: usize) -> Self {
        let n = x.len() / p.max(1);
        let mut center = Vec::with_capacity(p);
        for j in 0..p {
            let mut col: Vec<f64> = (0..n).map(|i| x[i * p + j]).collect();
            col.sort_by(f64::total_cmp);
            let m = if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            };
            center.push(m);
        }
        WeightFn::MedianCauchy { center }
    }

    /// Scalar-covariate weight.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            WeightFn::Unit => 1.0,
            WeightFn::MedianCauchy { center } => {
                let d = x - center[0];
                1.0 / (1.0 + d * d).sqrt()
            }
        }
    }

    /// Weight of a covariate row (product over coordinates).
    #[inline]
    pub fn eval_row(&self, x: &[f64]) -> f64 {
        match self {
            WeightFn::Unit => 1.0,
            WeightFn::MedianCauchy { center } => {
                let mut w = 1.0;
                for (xi, ci) in x.iter().zip(center) {
                    let d = xi - ci;
                    w /= (1.0 + d * d).sqrt();
                }
                w
            }
        }
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, WeightFn::Unit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_cauchy_values() {
        let w = WeightFn::MedianCauchy { center: vec![0.0] };
        assert_eq!(w.eval(0.0), 1.0);
        assert!((w.eval(1.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn unit_everywhere() {
        assert_eq!(WeightFn::Unit.eval(1e6), 1.0);
    }

    #[test]
    fn weights_in_unit_interval() {
        let w = WeightFn::MedianCauchy { center: vec![2.0] };
        for k in 0..100 {
            let x = -50.0 + k as f64;
            let v = w.eval(x);
            assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn median_from_data() {
        // column medians of {1, 5, 2} and {0, 0, 10}
        let x = vec![1.0, 0.0, 5.0, 0.0, 2.0, 10.0];
        match WeightFn::median_cauchy_from_data(&x, 2) {
            WeightFn::MedianCauchy { center } => {
                assert_eq!(center, vec![2.0, 0.0]);
            }
            _ => unreachable!(),
        }
    }
}
