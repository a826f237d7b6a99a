//! Univariate smoothing kernels, their closed-form moments, and product
//! kernels over covariate vectors.
//!
//! Moments are returned as exact closed forms so that bandwidth formulas are
//! reproducible bit-for-bit:
//!
//! * `kernel_moment(k, j)    = ∫ u^j K(u) du`
//! * `kernel_sq_moment(k, j) = ∫ u^j K(u)^2 du`

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `3/4 (1 - u^2)` on `[-1, 1]`.
    Epanechnikov,
    /// Standard normal density.
    Gaussian,
}

impl KernelKind {
    /// Whether the kernel vanishes outside `[-1, 1]`.
    pub fn is_compact(self) -> bool {
        matches!(self, KernelKind::Epanechnikov)
    }

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        eval_kernel(self, u)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            "gaussian" => Ok(KernelKind::Gaussian),
            other => Err(Error::InvalidInput(format!(
                "unknown kernel '{other}' (expected 'epanechnikov' or 'gaussian')"
            ))),
        }
    }
}

#[inline]
pub fn eval_kernel(kind: KernelKind, u: f64) -> f64 {
    match kind {
        KernelKind::Epanechnikov => {
            if u.abs() < 1.0 {
                0.75 * (1.0 - u * u)
            } else {
                0.0
            }
        }
        KernelKind::Gaussian => FRAC_1_SQRT_2PI * (-0.5 * u * u).exp(),
    }
}

/// `κ_j = ∫ u^j K(u) du` for `j` in `0..=4`.
pub fn kernel_moment(kind: KernelKind, j: u32) -> Result<f64> {
    if j > 4 {
        return Err(Error::UnsupportedMoment(j));
    }
    if j % 2 == 1 {
        return Ok(0.0);
    }
    Ok(match (kind, j) {
        (_, 0) => 1.0,
        (KernelKind::Epanechnikov, 2) => 1.0 / 5.0,
        (KernelKind::Epanechnikov, 4) => 3.0 / 35.0,
        (KernelKind::Gaussian, 2) => 1.0,
        (KernelKind::Gaussian, 4) => 3.0,
        _ => unreachable!(),
    })
}

/// `ν_j = ∫ u^j K(u)^2 du` for `j` in `0..=4`.
pub fn kernel_sq_moment(kind: KernelKind, j: u32) -> Result<f64> {
    if j > 4 {
        return Err(Error::UnsupportedMoment(j));
    }
    if j % 2 == 1 {
        return Ok(0.0);
    }
    Ok(match (kind, j) {
        (KernelKind::Epanechnikov, 0) => 3.0 / 5.0,
        (KernelKind::Epanechnikov, 2) => 3.0 / 35.0,
        (KernelKind::Epanechnikov, 4) => 1.0 / 35.0,
        (KernelKind::Gaussian, 0) => 1.0 / (2.0 * PI.sqrt()),
        (KernelKind::Gaussian, 2) => 1.0 / (4.0 * PI.sqrt()),
        (KernelKind::Gaussian, 4) => 3.0 / (8.0 * PI.sqrt()),
        _ => unreachable!(),
    })
}

/// `∏_i K(u_i)`; equals 1 for an empty vector.
pub fn product_kernel_weight(kind: KernelKind, u: &[f64]) -> f64 {
    let mut w = 1.0;
    for &ui in u {
        w *= eval_kernel(kind, ui);
        if w == 0.0 {
            break;
        }
    }
    w
}
