//! Curve estimators: the localized derivative estimator θ̂_C, the integral
//! estimator m̂_θ, and the regression-adjustment baselines m̂_RA, θ̂_RA.
//!
//! Every estimator needs local fits at `(t, S_i)` for many `t` and every
//! distinct covariate value, so they share one sweep that produces θ̂_C and
//! both RA averages together.

use serde::{Deserialize, Serialize};

use crate::condcdf::UNDERFLOW_GUARD;
use crate::data::{quantile_sorted, Dataset};
use crate::error::{Error, Result};
use crate::exec;
use crate::locpoly::{Engine, FitSummary, Workspace};
use crate::moments::{self, MomentSweep, ShiftTable};
use crate::params::EstimParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorTag {
    #[serde(rename = "theta_C")]
    ThetaC,
    #[serde(rename = "m_theta")]
    MTheta,
    #[serde(rename = "m_RA")]
    MRA,
    #[serde(rename = "theta_RA")]
    ThetaRA,
}

impl EstimatorTag {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorTag::ThetaC => "theta_C",
            EstimatorTag::MTheta => "m_theta",
            EstimatorTag::MRA => "m_RA",
            EstimatorTag::ThetaRA => "theta_RA",
        }
    }

    /// Whether the curve estimates `m` (as opposed to its derivative).
    pub fn is_level(self) -> bool {
        matches!(self, EstimatorTag::MTheta | EstimatorTag::MRA)
    }
}

impl std::fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// An estimated curve on the sorted distinct treatment values.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveEstimate {
    pub tag: EstimatorTag,
    pub grid: Vec<f64>,
    /// NaN exactly where `skipped` is set.
    pub values: Vec<f64>,
    pub skipped: Vec<bool>,
    /// Treatment interval of the reported region (trim quantiles of `T`).
    pub region: (f64, f64),
    /// Local fits dropped because their window was empty, summed over the grid.
    pub dropped_fits: usize,
    pub params: EstimParams,
}

impl CurveEstimate {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Index range of grid points inside the reported region.
    pub fn trimmed(&self) -> std::ops::Range<usize> {
        let lo = self.grid.partition_point(|&t| t < self.region.0);
        let hi = self.grid.partition_point(|&t| t <= self.region.1);
        lo..hi.max(lo)
    }

    /// Linear interpolation with the end values held constant outside the grid.
    /// Skipped points are ignored.
    pub fn interpolate(&self, t: f64) -> f64 {
        interpolate_clamped(&self.grid, &self.values, t)
    }
}

/// `m̂_θ` (or any curve) at an arbitrary `t`.
pub fn m_theta_interpolate(curve: &CurveEstimate, t: f64) -> f64 {
    curve.interpolate(t)
}

/// Linear interpolation on a sorted grid, constant beyond the ends.
pub fn interpolate_clamped(grid: &[f64], values: &[f64], t: f64) -> f64 {
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(values)
        .filter(|(_, v)| !v.is_nan())
        .map(|(g, v)| (*g, *v))
        .collect();
    if pts.is_empty() {
        return f64::NAN;
    }
    let k = pts.partition_point(|p| p.0 < t);
    if k == 0 {
        return pts[0].1;
    }
    if k == pts.len() {
        return pts[k - 1].1;
    }
    let (t0, v0) = pts[k - 1];
    let (t1, v1) = pts[k];
    if t == t1 {
        return v1;
    }
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// Which sweep outputs to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Want {
    pub theta_c: bool,
    pub ra: bool,
}

impl Want {
    pub const ALL: Want = Want { theta_c: true, ra: true };
    pub const THETA: Want = Want { theta_c: true, ra: false };
    pub const RA: Want = Want { theta_c: false, ra: true };
}

/// The curves a single sweep produces; `None` where not requested.
#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    pub theta_c: Option<CurveEstimate>,
    pub m_theta: Option<CurveEstimate>,
    pub m_ra: Option<CurveEstimate>,
    pub theta_ra: Option<CurveEstimate>,
}

impl Curves {
    pub fn get(&self, tag: EstimatorTag) -> Option<&CurveEstimate> {
        match tag {
            EstimatorTag::ThetaC => self.theta_c.as_ref(),
            EstimatorTag::MTheta => self.m_theta.as_ref(),
            EstimatorTag::MRA => self.m_ra.as_ref(),
            EstimatorTag::ThetaRA => self.theta_ra.as_ref(),
        }
    }
}

/// θ̂_C at a single treatment level.
pub fn theta_c_at(data: &Dataset, t: f64, params: &EstimParams) -> Result<f64> {
    let acc = sweep(data, params, &[t], Want::THETA)?;
    finish_theta(&acc[0], t)
}

/// m̂_RA at a single treatment level.
pub fn m_ra(data: &Dataset, t: f64, params: &EstimParams) -> Result<f64> {
    let acc = sweep(data, params, &[t], Want::RA)?;
    finish_ra(&acc[0], t).map(|(m, _)| m)
}

/// θ̂_RA at a single treatment level.
pub fn theta_ra(data: &Dataset, t: f64, params: &EstimParams) -> Result<f64> {
    let acc = sweep(data, params, &[t], Want::RA)?;
    finish_ra(&acc[0], t).map(|(_, b)| b)
}

pub fn theta_c_curve(data: &Dataset, params: &EstimParams) -> Result<CurveEstimate> {
    Ok(estimate_curves(data, params, Want::THETA)?.theta_c.unwrap())
}

pub fn m_ra_curve(data: &Dataset, params: &EstimParams) -> Result<CurveEstimate> {
    Ok(estimate_curves(data, params, Want::RA)?.m_ra.unwrap())
}

pub fn theta_ra_curve(data: &Dataset, params: &EstimParams) -> Result<CurveEstimate> {
    Ok(estimate_curves(data, params, Want::RA)?.theta_ra.unwrap())
}

/// θ̂_C followed by the fast Riemann form of m̂_θ.
pub fn m_theta_curve(data: &Dataset, params: &EstimParams) -> Result<CurveEstimate> {
    Ok(estimate_curves(data, params, Want::THETA)?.m_theta.unwrap())
}

/// All requested curves from one sweep over the distinct treatment values.
/// With `want.theta_c`, m̂_θ is derived from θ̂_C as well.
pub fn estimate_curves(data: &Dataset, params: &EstimParams, want: Want) -> Result<Curves> {
    let grid = data.unique_sorted_t();
    let region = trim_region(data, params);
    let acc = sweep(data, params, &grid, want)?;
    let mut out = Curves {
        theta_c: None,
        m_theta: None,
        m_ra: None,
        theta_ra: None,
    };
    let build = |tag, values: Vec<f64>, errs: &[Option<Error>], dropped: usize| -> Result<CurveEstimate> {
        if let Some(Some(first)) = errs.first().filter(|_| errs.iter().all(Option::is_some)) {
            return Err(first.clone());
        }
        Ok(CurveEstimate {
            tag,
            skipped: values.iter().map(|v| v.is_nan()).collect(),
            grid: grid.clone(),
            values,
            region,
            dropped_fits: dropped,
            params: params.clone(),
        })
    };

    if want.theta_c {
        let res: Vec<Result<f64>> = acc.iter().zip(&grid).map(|(a, &t)| finish_theta(a, t)).collect();
        let errs: Vec<Option<Error>> = res.iter().map(|r| r.as_ref().err().cloned()).collect();
        let values = res.iter().map(|r| *r.as_ref().unwrap_or(&f64::NAN)).collect();
        let dropped = acc.iter().map(|a| a.dropped).sum::<f64>() as usize;
        let theta = build(EstimatorTag::ThetaC, values, &errs, dropped)?;
        out.m_theta = Some(m_theta_fast(data, &theta)?);
        out.theta_c = Some(theta);
    }
    if want.ra {
        let res: Vec<Result<(f64, f64)>> = acc.iter().zip(&grid).map(|(a, &t)| finish_ra(a, t)).collect();
        let errs: Vec<Option<Error>> = res.iter().map(|r| r.as_ref().err().cloned()).collect();
        let dropped = acc.iter().map(|a| a.ra_dropped).sum::<f64>() as usize;
        let m = res.iter().map(|r| r.as_ref().map_or(f64::NAN, |v| v.0)).collect();
        let b = res.iter().map(|r| r.as_ref().map_or(f64::NAN, |v| v.1)).collect();
        out.m_ra = Some(build(EstimatorTag::MRA, m, &errs, dropped)?);
        out.theta_ra = Some(build(EstimatorTag::ThetaRA, b, &errs, dropped)?);
    }
    Ok(out)
}

/// Treatment interval between the trim quantiles (type 7) of `T`.
pub fn trim_region(data: &Dataset, params: &EstimParams) -> (f64, f64) {
    let sorted = data.sorted_t();
    (
        quantile_sorted(&sorted, params.trim_lo),
        quantile_sorted(&sorted, params.trim_hi),
    )
}

/// m̂_θ at the order statistics from θ̂_C on the same data's distinct treatment values.
///
/// Skipped θ̂_C points are filled by linear interpolation between their
/// neighbors (end values held constant) before summing, since the sum runs
/// over every gap.
pub fn m_theta_fast(data: &Dataset, theta: &CurveEstimate) -> Result<CurveEstimate> {
    if theta.tag != EstimatorTag::ThetaC {
        return Err(Error::InvalidInput(format!("expected a theta_C curve, got {}", theta.tag)));
    }
    let grid = data.unique_sorted_t();
    if grid != theta.grid {
        return Err(Error::InvalidInput("theta_C curve is not on this dataset's treatment values".into()));
    }
    let filled = fill_skipped(theta)?;
    let sorted = data.sorted_t();
    let mut k = 0;
    let theta_sorted: Vec<f64> = sorted
        .iter()
        .map(|&t| {
            while grid[k] < t {
                k += 1;
            }
            filled[k]
        })
        .collect();
    let m_sorted = riemann_integral(data.y_mean(), &sorted, &theta_sorted);
    let mut values = Vec::with_capacity(grid.len());
    let mut prev = f64::NAN;
    for (t, m) in sorted.iter().zip(m_sorted) {
        if *t != prev {
            values.push(m);
            prev = *t;
        }
    }
    Ok(CurveEstimate {
        tag: EstimatorTag::MTheta,
        skipped: vec![false; grid.len()],
        grid,
        values,
        region: theta.region,
        dropped_fits: theta.dropped_fits,
        params: theta.params.clone(),
    })
}

fn fill_skipped(curve: &CurveEstimate) -> Result<Vec<f64>> {
    if curve.values.iter().all(|v| v.is_nan()) {
        return Err(Error::AllFitsFailed { t: curve.grid.first().copied().unwrap_or(f64::NAN) });
    }
    Ok(curve
        .grid
        .iter()
        .zip(&curve.values)
        .map(|(&t, &v)| if v.is_nan() { curve.interpolate(t) } else { v })
        .collect())
}

/// The Riemann form of the integral estimator at the order statistics:
///
/// `m(T_(j)) = Ȳ + (1/n) Σ_{i<n} Δ_i [ i θ_i 1{i<j} − (n−i) θ_{i+1} 1{i≥j} ]`
///
/// with `θ_i = θ(T_(i))` and `Δ_i = T_(i+1) − T_(i)`, in O(n) via running sums.
pub fn riemann_integral(y_mean: f64, t_sorted: &[f64], theta_sorted: &[f64]) -> Vec<f64> {
    let n = t_sorted.len();
    assert_eq!(theta_sorted.len(), n, "theta length mismatch");
    if n == 0 {
        return Vec::new();
    }
    let nf = n as f64;
    // 1-based gap i = k + 1 between t_sorted[k] and t_sorted[k + 1].
    let gap = |k: usize| t_sorted[k + 1] - t_sorted[k];
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n - 1).rev() {
        let i = (k + 1) as f64;
        suffix[k] = suffix[k + 1] + (nf - i) * theta_sorted[k + 1] * gap(k);
    }
    let mut out = Vec::with_capacity(n);
    let mut prefix = 0.0;
    for j in 0..n {
        out.push(y_mean + (prefix - suffix[j]) / nf);
        if j + 1 < n {
            prefix += (j + 1) as f64 * theta_sorted[j] * gap(j);
        }
    }
    out
}

/// Reference m̂_θ: θ̂_C on `n_grid` equispaced points over the treatment
/// range, integrated with the trapezoid rule.
pub fn m_theta_quadrature_oracle(data: &Dataset, params: &EstimParams, n_grid: usize) -> Result<CurveEstimate> {
    if n_grid < 2 * data.n() {
        return Err(Error::InvalidInput(format!(
            "quadrature grid needs at least 2n = {} points, got {n_grid}",
            2 * data.n()
        )));
    }
    let xs = uniform_grid(data, n_grid);
    let acc = sweep(data, params, &xs, Want::THETA)?;
    let values: Vec<f64> = acc
        .iter()
        .zip(&xs)
        .map(|(a, &t)| finish_theta(a, t).unwrap_or(f64::NAN))
        .collect();
    let dense = CurveEstimate {
        tag: EstimatorTag::ThetaC,
        skipped: values.iter().map(|v| v.is_nan()).collect(),
        grid: xs.clone(),
        values,
        region: trim_region(data, params),
        dropped_fits: acc.iter().map(|a| a.dropped).sum::<f64>() as usize,
        params: params.clone(),
    };
    let filled = fill_skipped(&dense)?;
    let grid = data.unique_sorted_t();
    let values = integrate_theta(data, &xs, &filled, &grid);
    Ok(CurveEstimate {
        tag: EstimatorTag::MTheta,
        skipped: vec![false; grid.len()],
        grid,
        values,
        region: dense.region,
        dropped_fits: dense.dropped_fits,
        params: params.clone(),
    })
}

/// `n_grid` equispaced points from `min T` to `max T` (one point if they coincide).
pub fn uniform_grid(data: &Dataset, n_grid: usize) -> Vec<f64> {
    let sorted = data.sorted_t();
    let (a, b) = (sorted[0], sorted[sorted.len() - 1]);
    if a == b || n_grid < 2 {
        return vec![a];
    }
    let step = (b - a) / (n_grid - 1) as f64;
    (0..n_grid)
        .map(|k| if k == n_grid - 1 { b } else { a + step * k as f64 })
        .collect()
}

/// `(1/n) Σ_i [Y_i + ∫_{T_i}^{t} θ]` at each `t` in `at`, integrating the
/// linear interpolant of `theta` on the ascending grid `xs` exactly.
pub fn integrate_theta(data: &Dataset, xs: &[f64], theta: &[f64], at: &[f64]) -> Vec<f64> {
    assert_eq!(xs.len(), theta.len());
    let mut cum = vec![0.0; xs.len()];
    for k in 1..xs.len() {
        cum[k] = cum[k - 1] + 0.5 * (xs[k] - xs[k - 1]) * (theta[k - 1] + theta[k]);
    }
    let antideriv = |t: f64| -> f64 {
        if xs.len() == 1 {
            return theta[0] * (t - xs[0]);
        }
        let k = xs.partition_point(|&x| x <= t).clamp(1, xs.len() - 1) - 1;
        let dx = t - xs[k];
        let slope = (theta[k + 1] - theta[k]) / (xs[k + 1] - xs[k]);
        cum[k] + dx * (theta[k] + 0.5 * slope * dx)
    };
    let anchor = data.t().iter().map(|&t| antideriv(t)).sum::<f64>() / data.n() as f64;
    let y_mean = data.y_mean();
    at.iter().map(|&t| y_mean + antideriv(t) - anchor).collect()
}

/// Per-grid-point sums gathered by the sweep.
#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    /// Σ K̄ over all observations.
    w_raw: f64,
    /// Σ K̄ over observations whose fit succeeded.
    w_ok: f64,
    wb_ok: f64,
    /// Observations with positive K̄ weight whose fit failed.
    dropped: f64,
    ra_n: f64,
    ra_mu: f64,
    ra_beta: f64,
    ra_dropped: f64,
}

impl Acc {
    fn add(&mut self, o: &Acc) {
        self.w_raw += o.w_raw;
        self.w_ok += o.w_ok;
        self.wb_ok += o.wb_ok;
        self.dropped += o.dropped;
        self.ra_n += o.ra_n;
        self.ra_mu += o.ra_mu;
        self.ra_beta += o.ra_beta;
        self.ra_dropped += o.ra_dropped;
    }
}

fn finish_theta(a: &Acc, t: f64) -> Result<f64> {
    if !(a.w_raw >= UNDERFLOW_GUARD) {
        return Err(Error::DegenerateWeights { t, total_raw: a.w_raw });
    }
    if a.w_ok <= 0.0 {
        return Err(Error::AllFitsFailed { t });
    }
    Ok(a.wb_ok / a.w_ok)
}

fn finish_ra(a: &Acc, t: f64) -> Result<(f64, f64)> {
    if a.ra_n <= 0.0 {
        return Err(Error::AllFitsFailed { t });
    }
    Ok((a.ra_mu / a.ra_n, a.ra_beta / a.ra_n))
}

/// Observations sharing one covariate value: the local fit at `(t, s)` is
/// the same for all of them.
struct Group {
    s: Vec<f64>,
    /// `(T_i, multiplicity)` of the members.
    members: Vec<(f64, f64)>,
    size: f64,
}

fn groups(engine: &Engine<'_>) -> Vec<Group> {
    let m = engine.len();
    let mut idx: Vec<usize> = (0..m).collect();
    let cmp = |i: &usize, j: &usize| {
        engine
            .row_s(*i)
            .iter()
            .zip(engine.row_s(*j))
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(j))
    };
    idx.sort_by(cmp);
    let mut out: Vec<Group> = Vec::new();
    for j in idx {
        let s = engine.row_s(j);
        match out.last_mut() {
            Some(g) if g.s == s => {
                g.members.push((engine.row_t(j), engine.row_mult(j)));
                g.size += engine.row_mult(j);
            }
            _ => out.push(Group {
                s: s.to_vec(),
                members: vec![(engine.row_t(j), engine.row_mult(j))],
                size: engine.row_mult(j),
            }),
        }
    }
    out
}

/// Groups handled together by one task of the covariate-major sweep.
const GROUP_CHUNK: usize = 16;
/// Chunks in flight at once, bounding the memory of partial sums.
const CHUNK_BATCH: usize = 64;

fn sweep(data: &Dataset, params: &EstimParams, grid: &[f64], want: Want) -> Result<Vec<Acc>> {
    let engine = Engine::new(data, params)?;
    let groups = groups(&engine);
    let (lo, hi) = grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    let p = params.design_width();

    if moments::usable(&engine, lo, hi) {
        let table = ShiftTable::new(&engine, grid);
        let chunks: Vec<&[Group]> = groups.chunks(GROUP_CHUNK).collect();
        let mut total = vec![Acc::default(); grid.len()];
        for batch in chunks.chunks(CHUNK_BATCH) {
            let partials = exec::map_slice(batch, |chunk| {
                let mut acc = vec![Acc::default(); grid.len()];
                let mut ws = Workspace::new(p);
                for g in chunk.iter() {
                    let mut ms = MomentSweep::new(&engine, &g.s);
                    for (k, &t) in grid.iter().enumerate() {
                        contribute(&mut acc[k], g, t, params, want, || ms.fit_row(t, &table, k, &mut ws));
                    }
                }
                acc
            });
            for part in &partials {
                for (a, b) in total.iter_mut().zip(part) {
                    a.add(b);
                }
            }
        }
        Ok(total)
    } else {
        Ok(exec::map_slice(grid, |&t| {
            let slice = engine.slice(t);
            let mut ws = Workspace::new(p);
            let mut acc = Acc::default();
            for g in &groups {
                contribute(&mut acc, g, t, params, want, || slice.fit_summary(&g.s, &mut ws));
            }
            acc
        }))
    }
}

#[inline]
fn contribute(
    acc: &mut Acc,
    g: &Group,
    t: f64,
    params: &EstimParams,
    want: Want,
    fit: impl FnOnce() -> Result<FitSummary>,
) {
    let wbar = if want.theta_c {
        let kc = params.kernel_cdf;
        g.members.iter().map(|&(ti, m)| m * kc.eval((ti - t) / params.hbar)).sum()
    } else {
        0.0
    };
    acc.w_raw += wbar;
    let for_theta = want.theta_c && wbar > 0.0;
    if !for_theta && !want.ra {
        return;
    }
    match fit() {
        Ok(f) => {
            if for_theta {
                acc.w_ok += wbar;
                acc.wb_ok += wbar * f.beta2;
            }
            if want.ra {
                acc.ra_n += g.size;
                acc.ra_mu += g.size * f.mu;
                acc.ra_beta += g.size * f.beta2;
            }
        }
        Err(_) => {
            if for_theta {
                acc.dropped += g.size;
            }
            if want.ra {
                acc.ra_dropped += g.size;
            }
        }
    }
}
