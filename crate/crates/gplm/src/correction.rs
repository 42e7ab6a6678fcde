//! Fisher-consistency correction term `G`.
//!
//! Each loss prescribes the derivative `G'(s)` as an expectation over the
//! response support; `G` itself is the antiderivative anchored at a fixed
//! base point of the mean-parameter space (the additive constant cancels in
//! every estimating equation, the anchor just makes values reproducible).
//!
//! `G'` is piecewise analytic with kinks where a support point crosses a
//! score branch. `G` is therefore represented as piecewise Chebyshev
//! antiderivatives fitted between those kinks (with geometric refinement
//! toward the parameter-space boundary, where square-root behavior appears).
//! Evaluation is a binary search plus one Clenshaw recurrence, so losses that
//! need `G` in their hot path stay cheap. For the Croux-Haesbroeck score on
//! the Bernoulli family the closed form is used instead.

use statrs::function::erf::erf;

use crate::numeric::ChebPiece;

const SQRT_PI_HALF: f64 = 0.886_226_925_452_758; // sqrt(pi) / 2

/// Correction term representation.
#[derive(Debug, Clone)]
pub(crate) enum Correction {
    /// Identically zero (classical quasi-likelihood).
    Zero,
    /// Closed form for the Croux-Haesbroeck score on Bernoulli responses.
    ChBernoulli { c: f64, base_value: f64 },
    /// Piecewise Chebyshev antiderivative of `G'`.
    Table(CorrectionTable),
}

impl Correction {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Correction::Zero => 0.0,
            Correction::ChBernoulli { c, base_value } => ch_bernoulli_raw(s, *c) - base_value,
            Correction::Table(t) => t.eval(s),
        }
    }
}

/// Piecewise antiderivative with cumulative offsets.
#[derive(Debug, Clone)]
pub(crate) struct CorrectionTable {
    /// Piece boundaries, `len = pieces.len() + 1`, strictly increasing.
    breaks: Vec<f64>,
    /// Antiderivative on each piece, zero at the piece's left endpoint.
    pieces: Vec<ChebPiece>,
    /// Integral accumulated up to each piece's left endpoint.
    offsets: Vec<f64>,
    /// Raw antiderivative value at the anchor point (subtracted on eval).
    base_value: f64,
}

impl CorrectionTable {
    /// Build from the derivative `gp` on `[lo, hi]` with interior kink
    /// locations `kinks`, anchored so the result vanishes at `base`.
    pub fn build<F: Fn(f64) -> f64>(
        gp: F,
        lo: f64,
        hi: f64,
        kinks: &[f64],
        base: f64,
        order: usize,
    ) -> Self {
        let breaks = assemble_breaks(lo, hi, kinks);
        let mut pieces = Vec::with_capacity(breaks.len() - 1);
        let mut offsets = Vec::with_capacity(breaks.len() - 1);
        let mut acc = 0.0;
        for w in breaks.windows(2) {
            let piece = ChebPiece::fit(&gp, w[0], w[1], order).integral();
            offsets.push(acc);
            acc += piece.eval(w[1]);
            pieces.push(piece);
        }
        let mut table = CorrectionTable {
            breaks,
            pieces,
            offsets,
            base_value: 0.0,
        };
        table.base_value = table.eval(base);
        table
    }

    pub fn eval(&self, s: f64) -> f64 {
        let s = s.clamp(self.breaks[0], *self.breaks.last().unwrap());
        // index of the piece containing s (interior boundaries only)
        let k = self.breaks[1..self.breaks.len() - 1]
            .partition_point(|&b| b <= s)
            .min(self.pieces.len() - 1);
        self.offsets[k] + self.pieces[k].eval(s) - self.base_value
    }
}

/// Sorted piece boundaries: domain ends, kinks, and geometric ladders toward
/// both ends to absorb square-root behavior near the parameter boundary.
///
/// The ratio-4 ladder keeps the boundary singularity at least three
/// half-widths away from every Chebyshev piece, which is enough for
/// order-32 fits to reach ~1e-15 relative accuracy.
fn assemble_breaks(lo: f64, hi: f64, kinks: &[f64]) -> Vec<f64> {
    let span = hi - lo;
    let mut pts = vec![lo, hi];
    for &k in kinks {
        if k > lo && k < hi {
            pts.push(k);
        }
    }
    let mut d = lo * 3.0; // first ladder step: lo * 4 - lo
    let limit = 0.2 * span;
    while d < limit && lo + d < hi {
        pts.push(lo + d);
        pts.push(hi - d);
        d *= 4.0;
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-10 * a.abs().max(1e-300));
    pts
}

/// Raw (unanchored) closed-form `G` for the Croux-Haesbroeck score on the
/// Bernoulli family: `G'(s) = phi'(-ln s) - phi'(-ln(1 - s))`, integrated in
/// closed form with `phi'(t) = exp(-sqrt(c))` for `t <= c`, `exp(-sqrt(t))`
/// beyond.
pub(crate) fn ch_bernoulli_raw(s: f64, c: f64) -> f64 {
    ch_j(s, c) + ch_j(1.0 - s, c)
}

/// Antiderivative of `s -> phi'(-ln s)`.
fn ch_j(s: f64, c: f64) -> f64 {
    let tau = (-c).exp(); // -ln s <= c  <=>  s >= tau
    let e_quarter = 0.25f64.exp();
    let at = |w: f64| e_quarter * ((-w * w).exp() + SQRT_PI_HALF * erf(w));
    if s >= tau {
        at(c.sqrt() + 0.5) + (-c.sqrt()).exp() * (s - tau)
    } else {
        let s = s.max(1e-300);
        at((-s.ln()).sqrt() + 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::adaptive_simpson;

    #[test]
    fn ch_j_derivative_matches_definition() {
        let c = 0.5;
        for s in [1e-4f64, 0.05, 0.3, 0.55, 0.61, 0.9, 0.999] {
            let h = 1e-7 * s.max(1e-3);
            let fd = (ch_j(s + h, c) - ch_j(s - h, c)) / (2.0 * h);
            let t = -s.ln();
            let phi_d = if t <= c {
                (-c.sqrt()).exp()
            } else {
                (-t.sqrt()).exp()
            };
            assert!((fd - phi_d).abs() < 1e-6, "s={s}: fd={fd} want={phi_d}");
        }
    }

    #[test]
    fn table_reproduces_smooth_integral() {
        // G' = cos, integral anchored at base 0.7
        let t = CorrectionTable::build(f64::cos, 1e-12, 1.0 - 1e-12, &[0.33], 0.7, 32);
        for k in 0..200 {
            let s = 1e-6 + (1.0 - 2e-6) * k as f64 / 199.0;
            let want = s.sin() - 0.7f64.sin();
            assert!((t.eval(s) - want).abs() < 1e-12, "s={s}");
        }
    }

    #[test]
    fn table_handles_kinked_derivative() {
        let kink = 0.4;
        let gp = move |s: f64| (s - kink).abs();
        let t = CorrectionTable::build(gp, 1e-12, 1.0 - 1e-12, &[kink], kink, 32);
        for k in 0..100 {
            let s = 0.01 + 0.98 * k as f64 / 99.0;
            let want = adaptive_simpson(&gp, kink, s, 1e-13);
            assert!((t.eval(s) - want).abs() < 1e-11, "s={s}");
        }
    }

    #[test]
    fn table_handles_sqrt_boundary_behavior() {
        let gp = |s: f64| s.sqrt();
        let t = CorrectionTable::build(gp, 1e-12, 1.0 - 1e-12, &[], 0.5, 32);
        for s in [1e-9f64, 1e-6, 1e-3, 0.2, 0.9] {
            let want = (s.powf(1.5) - 0.5f64.powf(1.5)) / 1.5;
            assert!(
                (t.eval(s) - want).abs() < 1e-11,
                "s={s}: {} vs {want}",
                t.eval(s)
            );
        }
    }
}
