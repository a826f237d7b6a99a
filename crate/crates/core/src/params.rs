use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelKind;

/// How local weighted Gram matrices are accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Accumulation {
    /// Visit every in-window observation for every fit.
    Direct,
    /// With one covariate and a compact polynomial covariate kernel, take
    /// window sums from prefix sums over covariate-sorted observations; falls
    /// back to direct sums for small windows. Agrees with `Direct` to rounding.
    #[default]
    Auto,
}

/// Smoothing configuration shared by the estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimParams {
    /// Polynomial order in the treatment.
    pub q: usize,
    /// Treatment bandwidth.
    pub h: f64,
    /// Per-covariate bandwidths.
    pub b: Vec<f64>,
    /// Bandwidth of the conditional-CDF weights.
    pub hbar: f64,
    pub kernel_t: KernelKind,
    pub kernel_s: KernelKind,
    pub kernel_cdf: KernelKind,
    /// Quantile fractions of T delimiting the reported region.
    pub trim_lo: f64,
    pub trim_hi: f64,
    /// Relative pivot threshold of the rank-revealing solve.
    pub ridge_tol: f64,
    #[serde(default)]
    pub accumulation: Accumulation,
}

impl EstimParams {
    pub const DEFAULT_RIDGE_TOL: f64 = 1e-10;

    /// Defaults: `q = 2`, Epanechnikov `K_T`/`K_S`, Gaussian conditional-CDF
    /// kernel, untrimmed.
    pub fn new(h: f64, b: Vec<f64>, hbar: f64) -> Self {
        Self {
            q: 2,
            h,
            b,
            hbar,
            kernel_t: KernelKind::Epanechnikov,
            kernel_s: KernelKind::Epanechnikov,
            kernel_cdf: KernelKind::Gaussian,
            trim_lo: 0.0,
            trim_hi: 1.0,
            ridge_tol: Self::DEFAULT_RIDGE_TOL,
            accumulation: Accumulation::Auto,
        }
    }

    pub fn with_q(mut self, q: usize) -> Self {
        self.q = q;
        self
    }

    pub fn with_trim(mut self, lo: f64, hi: f64) -> Self {
        self.trim_lo = lo;
        self.trim_hi = hi;
        self
    }

    pub fn with_kernels(mut self, t: KernelKind, s: KernelKind, cdf: KernelKind) -> Self {
        self.kernel_t = t;
        self.kernel_s = s;
        self.kernel_cdf = cdf;
        self
    }

    pub fn with_accumulation(mut self, acc: Accumulation) -> Self {
        self.accumulation = acc;
        self
    }

    /// Number of columns of the local design, `q + 1 + d`.
    pub fn design_width(&self) -> usize {
        self.q + 1 + self.b.len()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.q < 1 {
            return bad("polynomial order q must be at least 1".into());
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("bandwidth h must be positive, got {}", self.h));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return bad(format!("bandwidth hbar must be positive, got {}", self.hbar));
        }
        if self.b.len() != d {
            return bad(format!("expected {d} covariate bandwidths, got {}", self.b.len()));
        }
        if let Some(bj) = self.b.iter().find(|bj| !(**bj > 0.0 && bj.is_finite())) {
            return bad(format!("covariate bandwidths must be positive, got {bj}"));
        }
        if !(0.0..=1.0).contains(&self.trim_lo)
            || !(0.0..=1.0).contains(&self.trim_hi)
            || self.trim_lo >= self.trim_hi
        {
            return bad(format!(
                "trim quantiles must satisfy 0 <= lo < hi <= 1, got ({}, {})",
                self.trim_lo, self.trim_hi
            ));
        }
        if !(self.ridge_tol >= 0.0 && self.ridge_tol < 1.0) {
            return bad(format!("ridge_tol must lie in [0, 1), got {}", self.ridge_tol));
        }
        Ok(())
    }
}
