//! Scalar numerical kernels: bracketed minimization, root finding, quadrature
//! and Chebyshev interpolation on subintervals.

/// Inverse golden ratio, `(sqrt(5) - 1) / 2`.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Result of a scalar minimization.
#[derive(Debug, Clone, Copy)]
pub struct ScalarMin {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Scan `n` equally spaced points on `[lo, hi]` and return the best one.
///
/// Ties are broken toward the smallest abscissa (strict improvement required
/// to move the incumbent).
pub fn grid_scan<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, n: usize) -> ScalarMin {
    debug_assert!(n >= 2 && hi > lo);
    let step = (hi - lo) / (n - 1) as f64;
    let mut best = ScalarMin {
        x: lo,
        fx: f(lo),
        iterations: n,
    };
    for k in 1..n {
        let x = if k == n - 1 { hi } else { lo + step * k as f64 };
        let fx = f(x);
        if fx < best.fx {
            best.x = x;
            best.fx = fx;
        }
    }
    best
}

/// Grid scan that also reports the value spread (plateau detection).
pub struct RangedScan {
    pub best: ScalarMin,
    /// `max - min` of the scanned values.
    pub range: f64,
}

pub fn scan_with_range<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, n: usize) -> RangedScan {
    debug_assert!(n >= 2 && hi > lo);
    let step = (hi - lo) / (n - 1) as f64;
    let first = f(lo);
    let mut best = ScalarMin {
        x: lo,
        fx: first,
        iterations: n,
    };
    let mut worst = first;
    for k in 1..n {
        let x = if k == n - 1 { hi } else { lo + step * k as f64 };
        let fx = f(x);
        if fx < best.fx {
            best.x = x;
            best.fx = fx;
        }
        if fx > worst {
            worst = fx;
        }
    }
    RangedScan {
        best,
        range: worst - best.fx,
    }
}

/// Golden-section minimization on `[lo, hi]` down to interval width `tol`.
///
/// Assumes the bracket contains a minimum of a function that is unimodal on
/// the bracket; on multimodal inputs it converges to some local minimum.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> ScalarMin {
    let (mut a, mut b) = (lo, hi);
    let mut iterations = 0usize;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol && iterations < 200 {
        iterations += 1;
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (a + b);
    ScalarMin {
        x,
        fx: f(x),
        iterations,
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`, to width `tol`.
///
/// Returns `None` when the endpoints do not bracket a sign change.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Option<f64> {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Adaptive Simpson quadrature with absolute tolerance `tol` (quadrature
/// oracle for the closed-form integrals; test builds only).
#[cfg_attr(not(test), allow(dead_code))]
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[cfg_attr(not(test), allow(dead_code))]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
#[cfg_attr(not(test), allow(dead_code))]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// A degree-`n` Chebyshev interpolant of a function on `[a, b]`.
#[derive(Debug, Clone)]
pub struct ChebPiece {
    pub a: f64,
    pub b: f64,
    /// Chebyshev coefficients, `c[0]` halved convention NOT used: value is
    /// `sum_k c[k] T_k(z)` with `z` the affine image of `x` in `[-1, 1]`.
    coef: Vec<f64>,
}

impl ChebPiece {
    /// Interpolate `f` at `n + 1` Chebyshev points of the second kind.
    pub fn fit<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> Self {
        debug_assert!(n >= 2 && b > a);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        // Values at x_j = mid + half * cos(pi j / n), j = 0..=n.
        let vals: Vec<f64> = (0..=n)
            .map(|j| {
                let z = (std::f64::consts::PI * j as f64 / n as f64).cos();
                f(mid + half * z)
            })
            .collect();
        // Discrete Chebyshev transform (O(n^2); pieces are small).
        let mut coef = vec![0.0; n + 1];
        for (k, ck) in coef.iter_mut().enumerate() {
            let mut s = 0.5 * (vals[0] + if k % 2 == 0 { vals[n] } else { -vals[n] });
            for (j, vj) in vals.iter().enumerate().take(n).skip(1) {
                s += vj * (std::f64::consts::PI * (k * j) as f64 / n as f64).cos();
            }
            *ck = 2.0 * s / n as f64;
        }
        coef[0] *= 0.5;
        coef[n] *= 0.5;
        ChebPiece { a, b, coef }
    }

    /// Evaluate by Clenshaw recurrence.
    pub fn eval(&self, x: f64) -> f64 {
        let z = (2.0 * x - self.a - self.b) / (self.b - self.a);
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coef.iter().rev() {
            let t = 2.0 * z * b1 - b2 + c;
            b2 = b1;
            b1 = t;
        }
        // b1 = sum c_k T_k(z) + z*b... unwind one step of the recurrence:
        // value = b1 - z * b2_prev; with the loop above the value is
        // b1 - z * b2.
        b1 - z * b2
    }

    /// Antiderivative as a new Chebyshev piece with value 0 at `a`.
    pub fn integral(&self) -> ChebPiece {
        let n = self.coef.len();
        let half = 0.5 * (self.b - self.a);
        let c = |k: usize| *self.coef.get(k).unwrap_or(&0.0);
        // b_1 = c_0 - c_2 / 2, b_k = (c_{k-1} - c_{k+1}) / (2k) for k >= 2,
        // all scaled by the interval half-width; b_0 fixes the constant.
        let mut out = vec![0.0; n + 1];
        out[1] = half * (c(0) - 0.5 * c(2));
        for (k, slot) in out.iter_mut().enumerate().skip(2) {
            *slot = half * (c(k - 1) - c(k + 1)) / (2.0 * k as f64);
        }
        let mut piece = ChebPiece {
            a: self.a,
            b: self.b,
            coef: out,
        };
        let at_a = piece.eval(self.a);
        piece.coef[0] -= at_a;
        piece
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_quadratic_min() {
        let m = golden_min(|x| (x - 0.37).powi(2), -2.0, 3.0, 1e-10);
        assert!((m.x - 0.37).abs() < 1e-9);
    }

    #[test]
    fn grid_scan_breaks_ties_left() {
        // f constant: the first point must win.
        let m = grid_scan(|_| 1.0, 0.0, 1.0, 11);
        assert_eq!(m.x, 0.0);
    }

    #[test]
    fn bisect_finds_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-13).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn bisect_rejects_unbracketed() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_none());
    }

    #[test]
    fn simpson_integrates_smooth() {
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn simpson_handles_kink() {
        let v = adaptive_simpson(&|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-12);
        let exact = 0.5 * (0.3f64.powi(2) + 0.7f64.powi(2));
        assert!((v - exact).abs() < 1e-10);
    }

    #[test]
    fn cheb_interpolates_and_integrates() {
        let p = ChebPiece::fit(|x: f64| (1.5 * x).sin(), 0.2, 1.7, 24);
        for k in 0..50 {
            let x = 0.2 + 1.5 * k as f64 / 49.0;
            assert!((p.eval(x) - (1.5 * x).sin()).abs() < 1e-13);
        }
        let q = p.integral();
        for k in 0..50 {
            let x = 0.2 + 1.5 * k as f64 / 49.0;
            let exact = (-(1.5 * x).cos() + (1.5 * 0.2f64).cos()) / 1.5;
            assert!(
                (q.eval(x) - exact).abs() < 1e-13,
                "x={x} got {} want {exact}",
                q.eval(x)
            );
        }
    }
}
