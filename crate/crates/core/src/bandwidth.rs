//! Rule-of-thumb bandwidths for the local fits and the normal-reference
//! bandwidth for the conditional-CDF weights.

use serde::{Deserialize, Serialize};

use crate::data::{sample_sd, Dataset};
use crate::error::{Error, Result};
use crate::kernels::{kernel_moment, kernel_sq_moment, KernelKind};
use crate::linalg::{lstsq, Matrix};

pub const DEFAULT_C_H: f64 = 10.0;
pub const DEFAULT_C_B: f64 = 15.0;
/// Curvature estimates are floored here so flat responses give finite bandwidths.
pub const CURVATURE_FLOOR: f64 = 1e-8;

/// Everything the rule-of-thumb formulas consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ROTInputs {
    pub c_h: f64,
    pub c_b: f64,
    /// Residual variance `R̂` of the global fit.
    pub rhat: f64,
    pub curvature_t: f64,
    pub curvature_s: Vec<f64>,
    /// `max T − min T`.
    pub range_t: f64,
    /// Coordinatewise covariate ranges.
    pub ranges_s: Vec<f64>,
    pub n: usize,
    pub kernel_t: KernelKind,
    pub kernel_s: KernelKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotBandwidths {
    pub h: f64,
    pub b: Vec<f64>,
    /// Whether any curvature estimate was raised to [`CURVATURE_FLOOR`].
    pub curvature_floored: bool,
}

/// Column-standardized treatment powers keep the global quartic well conditioned.
fn standardized(x: &[f64]) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = if x.len() > 1 { sample_sd(x) } else { 0.0 };
    let scale = if sd > 0.0 { sd } else { 1.0 };
    (x.iter().map(|v| (v - mean) / scale).collect(), scale)
}

fn check_size(data: &Dataset) -> Result<()> {
    let needed = 9 + data.d();
    if data.n() <= needed {
        return Err(Error::InsufficientData { needed, got: data.n() });
    }
    Ok(())
}

/// `R̂ = SSR / (n − 5)` from the unweighted global fit on
/// `(1, T − T̄, …, (T − T̄)⁴, S − S̄)`.
pub fn residual_variance_hat(data: &Dataset) -> Result<f64> {
    check_size(data)?;
    let n = data.n();
    let d = data.d();
    let p = 5 + d;
    let (u, _) = standardized(data.t());
    let s_cols: Vec<Vec<f64>> = (0..d).map(|j| standardized(&data.s_col(j)).0).collect();
    let mut a = Vec::with_capacity(n * p);
    for i in 0..n {
        let mut pw = 1.0;
        for _ in 0..5 {
            a.push(pw);
            pw *= u[i];
        }
        for col in &s_cols {
            a.push(col[i]);
        }
    }
    let x = Matrix::from_row_major(n, p, a);
    let sol = lstsq(&x, data.y(), 1e-12);
    let fitted = x.mul_vec(&sol.x);
    let ssr: f64 = data.y().iter().zip(&fitted).map(|(y, f)| (y - f) * (y - f)).sum();
    Ok(ssr / (n - 5) as f64)
}

/// Mean squared second derivative of a global quartic of `y` on `x`.
fn quartic_curvature(x: &[f64], y: &[f64]) -> f64 {
    let (u, scale) = standardized(x);
    let n = x.len();
    let mut a = Vec::with_capacity(n * 5);
    for &ui in &u {
        a.extend([1.0, ui, ui * ui, ui * ui * ui, ui * ui * ui * ui]);
    }
    let c = lstsq(&Matrix::from_row_major(n, 5, a), y, 1e-12).x;
    let s2 = scale * scale;
    u.iter()
        .map(|&ui| {
            let second = (2.0 * c[2] + 6.0 * c[3] * ui + 12.0 * c[4] * ui * ui) / s2;
            second * second
        })
        .sum::<f64>()
        / n as f64
}

/// Curvature estimates: one univariate quartic in `T`, and one per covariate.
pub fn curvature_hat(data: &Dataset) -> Result<(f64, Vec<f64>)> {
    check_size(data)?;
    let ct = quartic_curvature(data.t(), data.y());
    let cs = (0..data.d()).map(|j| quartic_curvature(&data.s_col(j), data.y())).collect();
    Ok((ct, cs))
}

fn range(x: &[f64]) -> f64 {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    hi - lo
}

/// Gather the data-dependent inputs of the rule of thumb (Epanechnikov moments).
pub fn rot_inputs(data: &Dataset, c_h: f64, c_b: f64) -> Result<ROTInputs> {
    let rhat = residual_variance_hat(data)?;
    let (curvature_t, curvature_s) = curvature_hat(data)?;
    Ok(ROTInputs {
        c_h,
        c_b,
        rhat,
        curvature_t,
        curvature_s,
        range_t: range(data.t()),
        ranges_s: (0..data.d()).map(|j| range(&data.s_col(j))).collect(),
        n: data.n(),
        kernel_t: KernelKind::Epanechnikov,
        kernel_s: KernelKind::Epanechnikov,
    })
}

/// The rule-of-thumb formulas:
///
/// `h = C_h [ν₀² R̂ (T₍ₙ₎ − T₍₁₎) / (4 κ₂² Ĉ_T n)]^{1/5}`
///
/// `b_j = C_b [d ν₀^{2d} R̂ (S₍ₙ₎ⱼ − S₍₁₎ⱼ) / (4 κ₂² Ĉ_{S,j})]^{−1/(d+5)} n^{−1/(d+1)}`
pub fn rot_from_inputs(inp: &ROTInputs) -> Result<RotBandwidths> {
    for (name, c) in [("C_h", inp.c_h), ("C_b", inp.c_b)] {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidScale(format!("{name} = {c}")));
        }
    }
    let n = inp.n as f64;
    let d = inp.ranges_s.len();
    let mut floored = inp.curvature_t < CURVATURE_FLOOR;
    let ct = inp.curvature_t.max(CURVATURE_FLOOR);
    let nu0 = kernel_sq_moment(inp.kernel_t, 0)?;
    let k2 = kernel_moment(inp.kernel_t, 2)?;
    let h = inp.c_h * (nu0 * nu0 * inp.rhat * inp.range_t / (4.0 * k2 * k2 * ct * n)).powf(0.2);
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidScale(format!(
            "treatment bandwidth came out as {h} (residual variance {}, range {})",
            inp.rhat, inp.range_t
        )));
    }

    let nu0s = kernel_sq_moment(inp.kernel_s, 0)?;
    let k2s = kernel_moment(inp.kernel_s, 2)?;
    let df = d as f64;
    let mut b = Vec::with_capacity(d);
    for j in 0..d {
        floored |= inp.curvature_s[j] < CURVATURE_FLOOR;
        let cs = inp.curvature_s[j].max(CURVATURE_FLOOR);
        let bracket = df * nu0s.powi(2 * d as i32) * inp.rhat * inp.ranges_s[j] / (4.0 * k2s * k2s * cs);
        let bj = inp.c_b * bracket.powf(-1.0 / (df + 5.0)) * n.powf(-1.0 / (df + 1.0));
        if !(bj > 0.0 && bj.is_finite()) {
            return Err(Error::InvalidScale(format!(
                "covariate bandwidth {} came out as {bj} (residual variance {}, range {})",
                j + 1,
                inp.rhat,
                inp.ranges_s[j]
            )));
        }
        b.push(bj);
    }
    Ok(RotBandwidths {
        h,
        b,
        curvature_floored: floored,
    })
}

/// Rule-of-thumb `(h, b)` for a dataset.
pub fn rot_bandwidths(data: &Dataset, c_h: f64, c_b: f64) -> Result<RotBandwidths> {
    for (name, c) in [("C_h", c_h), ("C_b", c_b)] {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidScale(format!("{name} = {c}")));
        }
    }
    rot_from_inputs(&rot_inputs(data, c_h, c_b)?)
}

/// Multiply `h` by `sd(T)` and each `b_j` by `sd(S_j)`.
pub fn scale_by_sd(bw: &RotBandwidths, data: &Dataset) -> Result<RotBandwidths> {
    let sd_t = sample_sd(data.t());
    let mut out = bw.clone();
    out.h *= sd_t;
    for (j, bj) in out.b.iter_mut().enumerate() {
        *bj *= sample_sd(&data.s_col(j));
    }
    if !(out.h > 0.0) || out.b.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::InvalidScale("a standard deviation is zero".into()));
    }
    Ok(out)
}

/// `ℏ = (4 / (3n))^{1/5} σ̂_T`.
pub fn nr_bandwidth(tvec: &[f64]) -> Result<f64> {
    if tvec.len() < 2 {
        return Err(Error::InsufficientData { needed: 1, got: tvec.len() });
    }
    let sd = sample_sd(tvec);
    if sd == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((4.0 / (3.0 * tvec.len() as f64)).powf(0.2) * sd)
}
