//! Smoothing kernels and normalized kernel weights.

use crate::error::{GplmError, Result};

/// Kernel shape; all variants are even, nonnegative, bounded and integrate
/// to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelShape {
    /// `K(v) = max(0, 1 - |v|)`.
    Triangular,
    /// `K(v) = 0.75 (1 - v^2)` on `[-1, 1]`.
    Epanechnikov,
    /// Standard normal density (differentiable everywhere).
    Gaussian,
}

impl KernelShape {
    #[inline]
    pub fn k(&self, v: f64) -> f64 {
        match self {
            KernelShape::Triangular => (1.0 - v.abs()).max(0.0),
            KernelShape::Epanechnikov => {
                let w = 1.0 - v * v;
                if w > 0.0 {
                    0.75 * w
                } else {
                    0.0
                }
            }
            KernelShape::Gaussian => {
                (-0.5 * v * v).exp() / (2.0 * std::f64::consts::PI).sqrt()
            }
        }
    }

    /// `K'(v)` where defined; only the Gaussian kernel is differentiable
    /// everywhere.
    #[inline]
    pub fn k_deriv(&self, v: f64) -> Option<f64> {
        match self {
            KernelShape::Gaussian => Some(-v * self.k(v)),
            _ => None,
        }
    }

    /// Support radius in scaled units (`None` for unbounded support).
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            KernelShape::Triangular | KernelShape::Epanechnikov => Some(1.0),
            KernelShape::Gaussian => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            KernelShape::Triangular => "triangular",
            KernelShape::Epanechnikov => "epanechnikov",
            KernelShape::Gaussian => "gaussian",
        }
    }
}

/// Kernel shape plus bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub shape: KernelShape,
    pub h: f64,
}

impl KernelSpec {
    pub fn new(shape: KernelShape, h: f64) -> Result<Self> {
        if h > 0.0 && h.is_finite() {
            Ok(KernelSpec { shape, h })
        } else {
            Err(GplmError::InvalidSpec(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
    }

    pub fn triangular(h: f64) -> Result<Self> {
        Self::new(KernelShape::Triangular, h)
    }

    /// Raw kernel value at distance `dt = t - t_i`.
    #[inline]
    pub fn k_scaled(&self, dt: f64) -> f64 {
        self.shape.k(dt / self.h)
    }
}

/// Normalized kernel weights
/// `W_i(t) = K((t - t_i)/h) / sum_j K((t - t_j)/h)`.
///
/// The weights are a probability vector; an empty window (all raw kernel
/// values zero) is an error carrying the query point and bandwidth.
pub fn kernel_weights(t: f64, t_data: &[f64], kernel: &KernelSpec) -> Result<Vec<f64>> {
    let mut w: Vec<f64> = t_data.iter().map(|&ti| kernel.k_scaled(t - ti)).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(GplmError::EmptyWindow { t, h: kernel.h });
    }
    for wi in &mut w {
        *wi /= total;
    }
    Ok(w)
}
