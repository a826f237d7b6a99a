//! Partial local polynomial regression: a degree-`q` polynomial in `T − t`
//! plus a linear term in `S − s`, fitted by kernel-weighted least squares.
//!
//! The design is solved in bandwidth-scaled coordinates (`(T − t)/h`,
//! `(S − s)/b`) through its weighted Gram matrix, factorized with the
//! column-pivoted QR of [`crate::linalg`]. Coefficients are mapped back to the
//! original scale before they are returned.
//!
//! Estimators need fits at one `t` and many `s`; [`Engine`] prepares the data
//! once and [`Slice`] holds everything that depends only on `t`, so each fit
//! costs one pass over its kernel window (or O(1) window sums, see
//! [`Accumulation`]).

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::KernelKind;
use crate::linalg::{lstsq_in_place, solve_psd_pivoted, Matrix};
use crate::params::{Accumulation, EstimParams};

/// Solved local problem at one `(t, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    /// `β̂₀..β̂_q`; `beta[0]` estimates `μ(t, s)` and `beta[1]` its `t`-derivative.
    pub beta: Vec<f64>,
    /// Covariate slopes `α̂`.
    pub alpha: Vec<f64>,
    /// Observations (with multiplicity) carrying positive weight.
    pub eff_points: usize,
    pub rank_deficient: bool,
}

impl LocalFit {
    pub fn coefficients(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.alpha).copied().collect()
    }
}

/// `μ̂(t, s)`.
pub fn mu_hat(fit: &LocalFit) -> f64 {
    fit.beta[0]
}

/// `∂μ̂/∂t` at `(t, s)`.
pub fn beta2_hat(fit: &LocalFit) -> f64 {
    fit.beta[1]
}

/// `(1, (T_i−t), …, (T_i−t)^q, S_i1−s_1, …, S_id−s_d)`.
pub fn build_design_row(t: f64, s: &[f64], t_i: f64, s_i: &[f64], q: usize) -> Vec<f64> {
    assert_eq!(s.len(), s_i.len(), "covariate dimension mismatch");
    let u = t_i - t;
    let mut row = Vec::with_capacity(q + 1 + s.len());
    let mut p = 1.0;
    for _ in 0..=q {
        row.push(p);
        p *= u;
    }
    row.extend(s_i.iter().zip(s).map(|(a, b)| a - b));
    row
}

/// Fit the local problem at `(t, s)`.
///
/// Always accumulates the window directly, so the result depends only on the
/// observations with positive weight. Rank-deficient local designs return
/// the minimum-norm solution with `rank_deficient` set.
pub fn local_fit(data: &Dataset, t: f64, s: &[f64], params: &EstimParams) -> Result<LocalFit> {
    if s.len() != data.d() {
        return Err(Error::InvalidInput(format!(
            "evaluation point has {} covariates, data has {}",
            s.len(),
            data.d()
        )));
    }
    let params = params.clone().with_accumulation(Accumulation::Direct);
    let engine = Engine::new(data, &params)?;
    let slice = engine.slice(t);
    let mut ws = Workspace::new(engine.p);
    slice.fit(s, &mut ws)
}

/// Compressed, treatment-sorted view of a dataset for repeated local fits.
///
/// Identical rows are merged and carry their multiplicity as a weight, which
/// leaves every weighted least-squares problem unchanged.
pub(crate) struct Engine<'a> {
    params: &'a EstimParams,
    q: usize,
    d: usize,
    p: usize,
    y: Vec<f64>,
    t: Vec<f64>,
    s: Vec<f64>,
    mult: Vec<f64>,
    /// Compressed rows ordered by the first covariate.
    s_order: Vec<usize>,
    s_center: f64,
    use_prefix: bool,
}

/// Windows smaller than this are summed directly even when prefix sums are on.
const MIN_PREFIX_ROWS: usize = 48;

impl<'a> Engine<'a> {
    pub(crate) fn new(data: &Dataset, params: &'a EstimParams) -> Result<Self> {
        params.validate(data.d())?;
        let d = data.d();
        let n = data.n();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            data.t()[i]
                .total_cmp(&data.t()[j])
                .then_with(|| {
                    data.s_row(i)
                        .iter()
                        .zip(data.s_row(j))
                        .map(|(a, b)| a.total_cmp(b))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .then_with(|| data.y()[i].total_cmp(&data.y()[j]))
        });

        let mut y = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        let mut s = Vec::with_capacity(n * d);
        let mut mult: Vec<f64> = Vec::with_capacity(n);
        let mut prev: Option<usize> = None;
        for &i in &order {
            let same = prev.is_some_and(|p| {
                data.t()[p] == data.t()[i] && data.y()[p] == data.y()[i] && data.s_row(p) == data.s_row(i)
            });
            if same {
                *mult.last_mut().unwrap() += 1.0;
            } else {
                y.push(data.y()[i]);
                t.push(data.t()[i]);
                s.extend_from_slice(data.s_row(i));
                mult.push(1.0);
                prev = Some(i);
            }
        }

        let m = y.len();
        let mut s_order: Vec<usize> = (0..m).collect();
        if d >= 1 {
            s_order.sort_by(|&i, &j| s[i * d].total_cmp(&s[j * d]).then(i.cmp(&j)));
        }
        let s_center = if d >= 1 {
            let total: f64 = mult.iter().sum();
            (0..m).map(|i| s[i * d] * mult[i]).sum::<f64>() / total
        } else {
            0.0
        };
        let use_prefix = d == 1
            && params.kernel_s == KernelKind::Epanechnikov
            && params.accumulation == Accumulation::Auto;

        Ok(Self {
            params,
            q: params.q,
            d,
            p: params.q + 1 + d,
            y,
            t,
            s,
            mult,
            s_order,
            s_center,
            use_prefix,
        })
    }

    pub(crate) fn params(&self) -> &EstimParams {
        self.params
    }

    /// Number of compressed rows.
    pub(crate) fn len(&self) -> usize {
        self.y.len()
    }

    pub(crate) fn row_t(&self, j: usize) -> f64 {
        self.t[j]
    }

    pub(crate) fn row_s(&self, j: usize) -> &[f64] {
        &self.s[j * self.d..(j + 1) * self.d]
    }

    pub(crate) fn row_mult(&self, j: usize) -> f64 {
        self.mult[j]
    }

    pub(crate) fn row_y(&self, j: usize) -> f64 {
        self.y[j]
    }

    pub(crate) fn q(&self) -> usize {
        self.q
    }

    pub(crate) fn d(&self) -> usize {
        self.d
    }

    /// Compressed treatment values, ascending.
    pub(crate) fn t_sorted(&self) -> &[f64] {
        &self.t
    }

    /// Everything the fits at treatment level `t` share.
    pub(crate) fn slice(&self, t: f64) -> Slice<'_> {
        let h = self.params.h;
        let kt = self.params.kernel_t;
        let m = self.len();
        let (lo, hi) = if kt.is_compact() {
            (
                self.t.partition_point(|&v| v <= t - h),
                self.t.partition_point(|&v| v < t + h),
            )
        } else {
            (0, m)
        };

        let mut kt_w = vec![0.0; hi - lo];
        for j in lo..hi {
            kt_w[j - lo] = self.mult[j] * kt.eval((self.t[j] - t) / h);
        }

        let q1 = self.q + 1;
        let mut rows = Vec::new();
        let mut a = Vec::new();
        let mut xt = Vec::new();
        let push = |j: usize, rows: &mut Vec<usize>, a: &mut Vec<f64>, xt: &mut Vec<f64>| {
            let w = kt_w[j - lo];
            if w > 0.0 {
                rows.push(j);
                a.push(w);
                let u = (self.t[j] - t) / h;
                let mut p = 1.0;
                for _ in 0..q1 {
                    xt.push(p);
                    p *= u;
                }
            }
        };
        if self.d >= 1 {
            for &j in &self.s_order {
                if j >= lo && j < hi {
                    push(j, &mut rows, &mut a, &mut xt);
                }
            }
        } else {
            for j in lo..hi {
                push(j, &mut rows, &mut a, &mut xt);
            }
        }

        let s1: Vec<f64> = if self.d >= 1 {
            rows.iter().map(|&j| self.s[j * self.d]).collect()
        } else {
            Vec::new()
        };

        let mut slice = Slice {
            engine: self,
            t,
            rows,
            a,
            xt,
            s1,
            prefix: None,
        };
        if self.use_prefix && slice.rows.len() >= MIN_PREFIX_ROWS {
            slice.prefix = Some(Prefix::build(&slice));
        }
        slice
    }
}

/// Per-`t` state: observations with positive treatment-kernel weight, sorted
/// by the first covariate.
pub(crate) struct Slice<'e> {
    engine: &'e Engine<'e>,
    t: f64,
    rows: Vec<usize>,
    /// Multiplicity × `K_T((T_j − t)/h)`.
    a: Vec<f64>,
    /// Scaled treatment powers, `q + 1` per row.
    xt: Vec<f64>,
    s1: Vec<f64>,
    prefix: Option<Prefix>,
}

/// Scratch buffers for one fit.
pub(crate) struct Workspace {
    p: usize,
    pub(crate) g: Vec<f64>,
    pub(crate) r: Vec<f64>,
    g_copy: Vec<f64>,
    r_copy: Vec<f64>,
    perm: Vec<usize>,
    x: Vec<f64>,
    v: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(p: usize) -> Self {
        Self {
            p,
            g: vec![0.0; p * p],
            r: vec![0.0; p],
            g_copy: vec![0.0; p * p],
            r_copy: vec![0.0; p],
            perm: vec![0; p],
            x: vec![0.0; p],
            v: Vec::new(),
        }
    }
}

/// Solve the scaled normal equations held in `ws` (upper triangle of `g`,
/// right-hand side `r`) and leave the coefficients, mapped back to the
/// original scale, in `ws.r`. Returns whether the Gram matrix was
/// rank-deficient.
///
/// Full-rank systems go through a pivoted `LDLᵀ`; a pivot at or below
/// `ridge_tol` times the largest one hands the system to the column-pivoted
/// QR for the minimum-norm solution.
pub(crate) fn solve_gram(ws: &mut Workspace, q: usize, params: &EstimParams) -> bool {
    let p = ws.p;
    for i in 0..p {
        for j in 0..i {
            ws.g[i * p + j] = ws.g[j * p + i];
        }
    }
    ws.g_copy.copy_from_slice(&ws.g);
    ws.r_copy.copy_from_slice(&ws.r);
    let mut deficient = false;
    if !solve_psd_pivoted(&mut ws.g, &mut ws.r, p, params.ridge_tol, &mut ws.perm) {
        let mut g = Matrix::from_row_major(p, p, ws.g_copy.clone());
        let sol = lstsq_in_place(&mut g, &mut ws.r_copy, params.ridge_tol);
        ws.r.copy_from_slice(&sol.x);
        deficient = true;
    }
    let mut scale = 1.0;
    for c in ws.r.iter_mut().take(q + 1) {
        *c /= scale;
        scale *= params.h;
    }
    for (k, c) in ws.r[q + 1..].iter_mut().enumerate() {
        *c /= params.b[k];
    }
    deficient
}

/// Compact summary of a fit for the estimators' inner loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct FitSummary {
    pub mu: f64,
    pub beta2: f64,
}

impl<'e> Slice<'e> {
    pub(crate) fn fit(&self, s: &[f64], ws: &mut Workspace) -> Result<LocalFit> {
        let (eff, coef, rank_deficient) = self.solve(s, ws)?;
        let q1 = self.engine.q + 1;
        Ok(LocalFit {
            beta: coef[..q1].to_vec(),
            alpha: coef[q1..].to_vec(),
            eff_points: eff,
            rank_deficient,
        })
    }

    pub(crate) fn fit_summary(&self, s: &[f64], ws: &mut Workspace) -> Result<FitSummary> {
        let eff = self.accumulate(s, ws);
        if eff == 0.0 {
            return Err(Error::NoLocalData { t: self.t });
        }
        solve_gram(ws, self.engine.q, self.engine.params);
        Ok(FitSummary {
            mu: ws.r[0],
            beta2: ws.r[1],
        })
    }

    fn solve(&self, s: &[f64], ws: &mut Workspace) -> Result<(usize, Vec<f64>, bool)> {
        let e = self.engine;
        debug_assert_eq!(ws.p, e.p);
        let eff = self.accumulate(s, ws);
        if eff == 0.0 {
            return Err(Error::NoLocalData { t: self.t });
        }
        let deficient = solve_gram(ws, e.q, e.params);
        Ok((eff.round() as usize, ws.r.clone(), deficient))
    }

    /// Fill `ws.g` (upper triangle) and `ws.r`; returns the weighted count.
    fn accumulate(&self, s: &[f64], ws: &mut Workspace) -> f64 {
        let e = self.engine;
        let p = e.p;
        ws.g.iter_mut().for_each(|v| *v = 0.0);
        ws.r.iter_mut().for_each(|v| *v = 0.0);

        let (lo, hi) = self.window(s);
        if let Some(prefix) = &self.prefix {
            let (plo, phi) = prefix.window(s[0], e);
            if phi - plo >= MIN_PREFIX_ROWS {
                return prefix.accumulate(plo, phi, s[0], e, ws);
            }
        }

        let q1 = e.q + 1;
        let ks = e.params.kernel_s;
        let b = &e.params.b;
        ws.v.resize(e.d, 0.0);
        let mut count = 0.0;
        for k in lo..hi {
            let j = self.rows[k];
            let sj = e.row_s(j);
            let mut w = self.a[k];
            for c in 0..e.d {
                let v = (sj[c] - s[c]) / b[c];
                ws.v[c] = v;
                w *= ks.eval(v);
            }
            if w <= 0.0 {
                continue;
            }
            count += e.mult[j];
            ws.x[..q1].copy_from_slice(&self.xt[k * q1..(k + 1) * q1]);
            ws.x[q1..].copy_from_slice(&ws.v);
            let yj = e.y[j];
            for i in 0..p {
                let wx = w * ws.x[i];
                ws.r[i] += wx * yj;
                let row = &mut ws.g[i * p..(i + 1) * p];
                for (gij, xj) in row[i..].iter_mut().zip(&ws.x[i..]) {
                    *gij += wx * xj;
                }
            }
        }
        count
    }

    /// Candidate range of slice rows for a fit at `s`.
    fn window(&self, s: &[f64]) -> (usize, usize) {
        let e = self.engine;
        if e.d == 0 || !e.params.kernel_s.is_compact() {
            return (0, self.rows.len());
        }
        let b1 = e.params.b[0];
        (
            self.s1.partition_point(|&v| v <= s[0] - b1),
            self.s1.partition_point(|&v| v < s[0] + b1),
        )
    }
}

/// Window sums for one covariate with the Epanechnikov kernel.
///
/// With `z_j = (1, u_j, …, u_j^q, S̃_j)` and `S̃ = (S − c)/b`, the kernel
/// `3/4 (1 − (S̃_j − s̃)²)` is a quadratic in `S̃_j`, so every Gram entry is a
/// combination of three prefix sums of `a_j S̃_j^e z_j z_jᵀ`.
struct Prefix {
    /// Upper-triangle entries plus `p` right-hand-side entries.
    block: usize,
    /// `(rows + 1) × 3 × block`, cumulative.
    sums: Vec<f64>,
    count: Vec<f64>,
    stilde: Vec<f64>,
}

impl Prefix {
    fn build(slice: &Slice<'_>) -> Self {
        let e = slice.engine;
        let p = e.p;
        let q1 = e.q + 1;
        let tri = p * (p + 1) / 2;
        let block = tri + p;
        let k = slice.rows.len();
        let b1 = e.params.b[0];
        let stilde: Vec<f64> = slice.s1.iter().map(|&v| (v - e.s_center) / b1).collect();
        let mut sums = vec![0.0; (k + 1) * 3 * block];
        let mut count = vec![0.0; k + 1];
        let mut z = vec![0.0; p];
        let mut term = vec![0.0; block];
        for r in 0..k {
            let j = slice.rows[r];
            z[..q1].copy_from_slice(&slice.xt[r * q1..(r + 1) * q1]);
            z[q1] = stilde[r];
            let aj = slice.a[r];
            let yj = e.y[j];
            let mut idx = 0;
            for i in 0..p {
                for l in i..p {
                    term[idx] = aj * z[i] * z[l];
                    idx += 1;
                }
            }
            for i in 0..p {
                term[tri + i] = aj * z[i] * yj;
            }
            let (prev, cur) = sums.split_at_mut((r + 1) * 3 * block);
            let prev = &prev[r * 3 * block..];
            let cur = &mut cur[..3 * block];
            let st = stilde[r];
            let pw = [1.0, st, st * st];
            for ep in 0..3 {
                for m in 0..block {
                    cur[ep * block + m] = prev[ep * block + m] + pw[ep] * term[m];
                }
            }
            count[r + 1] = count[r] + e.mult[j];
        }
        Self {
            block,
            sums,
            count,
            stilde,
        }
    }

    fn window(&self, s1: f64, e: &Engine<'_>) -> (usize, usize) {
        let st = (s1 - e.s_center) / e.params.b[0];
        (
            self.stilde.partition_point(|&v| v <= st - 1.0),
            self.stilde.partition_point(|&v| v < st + 1.0),
        )
    }

    fn accumulate(&self, lo: usize, hi: usize, s1: f64, e: &Engine<'_>, ws: &mut Workspace) -> f64 {
        let p = e.p;
        let tri = p * (p + 1) / 2;
        let st = (s1 - e.s_center) / e.params.b[0];
        let c0 = 0.75 * (1.0 - st * st);
        let c1 = 0.75 * 2.0 * st;
        let c2 = -0.75;
        let b = self.block;
        let hi_row = &self.sums[hi * 3 * b..(hi + 1) * 3 * b];
        let lo_row = &self.sums[lo * 3 * b..(lo + 1) * 3 * b];
        let win = |ep: usize, m: usize| hi_row[ep * b + m] - lo_row[ep * b + m];
        // Gram of z (uncentered covariate), then shift the covariate column by s̃.
        let mut idx = 0;
        for i in 0..p {
            for l in i..p {
                ws.g[i * p + l] = c0 * win(0, idx) + c1 * win(1, idx) + c2 * win(2, idx);
                idx += 1;
            }
        }
        for i in 0..p {
            ws.r[i] = c0 * win(0, tri + i) + c1 * win(1, tri + i) + c2 * win(2, tri + i);
        }
        let sc = p - 1;
        let g00 = ws.g[0];
        let g0s = ws.g[sc];
        ws.g[sc * p + sc] += -2.0 * st * g0s + st * st * g00;
        for i in 0..sc {
            ws.g[i * p + sc] -= st * ws.g[i];
        }
        ws.r[sc] -= st * ws.r[0];
        self.count[hi] - self.count[lo]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(h: f64, b: Vec<f64>) -> EstimParams {
        EstimParams::new(h, b, 0.5)
    }

    /// Reference solve: explicit weighted normal equations, no scaling.
    fn normal_equation_residual(data: &Dataset, t: f64, s: &[f64], p: &EstimParams, coef: &[f64]) -> f64 {
        let k = coef.len();
        let mut g = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..data.n() {
            let x = build_design_row(t, s, data.t()[i], data.s_row(i), p.q);
            let mut w = p.kernel_t.eval((data.t()[i] - t) / p.h);
            for (c, bc) in p.b.iter().enumerate() {
                w *= p.kernel_s.eval((data.s_row(i)[c] - s[c]) / bc);
            }
            let fitted: f64 = x.iter().zip(coef).map(|(a, b)| a * b).sum();
            for j in 0..k {
                g[j] += w * x[j] * (data.y()[i] - fitted);
                rhs[j] += w * x[j] * data.y()[i];
            }
        }
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        norm(&g) / (1.0 + norm(&rhs))
    }

    fn random_data(n: usize, d: usize, seed: u64, f: impl Fn(f64, &[f64]) -> f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = Vec::new();
        let mut t = Vec::new();
        let mut s = Vec::new();
        for _ in 0..n {
            let ti: f64 = rng.random_range(-1.0..1.0);
            let si: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            y.push(f(ti, &si));
            t.push(ti);
            s.extend_from_slice(&si);
        }
        Dataset::new(y, t, s, d).unwrap()
    }

    #[test]
    fn design_rows() {
        assert_eq!(build_design_row(0.0, &[0.0], 0.0, &[0.0], 2), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(build_design_row(1.0, &[2.0], 3.0, &[5.0], 2), vec![1.0, 2.0, 4.0, 3.0]);
        assert_eq!(build_design_row(0.0, &[], 0.5, &[], 3), vec![1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn reproduces_in_span_response() {
        let t0 = 0.1;
        let data = random_data(300, 1, 1, |t, _| 3.0 + 2.0 * (t - t0));
        let fit = local_fit(&data, t0, &[0.2], &params(0.6, vec![0.7])).unwrap();
        assert!((fit.beta[0] - 3.0).abs() < 1e-10);
        assert!((fit.beta[1] - 2.0).abs() < 1e-10);
        assert!(fit.beta[2].abs() < 1e-9);
        assert!(fit.alpha[0].abs() < 1e-9);
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn constant_response() {
        let data = random_data(200, 2, 2, |_, _| 4.5);
        let fit = local_fit(&data, 0.0, &[0.0, 0.0], &params(0.8, vec![0.9, 0.9])).unwrap();
        assert!((mu_hat(&fit) - 4.5).abs() < 1e-12);
        assert!(beta2_hat(&fit).abs() < 1e-10);
        assert!(fit.alpha.iter().all(|a| a.abs() < 1e-10));
    }

    #[test]
    fn quadratic_derivative() {
        let data = random_data(400, 0, 3, |t, _| t * t);
        for t0 in [-0.5, 0.0, 0.3, 0.6] {
            let fit = local_fit(&data, t0, &[], &params(0.4, vec![])).unwrap();
            assert!((beta2_hat(&fit) - 2.0 * t0).abs() < 1e-6);
        }
    }

    #[test]
    fn interpolates_square_system() {
        // q + 1 + d = 4 points near (0, 0) and far-away filler that gets zero weight.
        let y = vec![1.0, -2.0, 0.5, 3.0, 100.0, -50.0];
        let t = vec![-0.005, 0.001, 0.004, 0.0, 5.0, -5.0];
        let s = vec![0.002, -0.003, 0.001, 0.004, 0.0, 0.0];
        let data = Dataset::new(y.clone(), t.clone(), s.clone(), 1).unwrap();
        let p = params(0.01, vec![0.01]);
        let fit = local_fit(&data, 0.0, &[0.0], &p).unwrap();
        assert_eq!(fit.eff_points, 4);
        let coef = fit.coefficients();
        for i in 0..4 {
            let x = build_design_row(0.0, &[0.0], t[i], &[s[i]], 2);
            let fitted: f64 = x.iter().zip(&coef).map(|(a, b)| a * b).sum();
            assert!((fitted - y[i]).abs() < 1e-8, "row {i}: {fitted} vs {}", y[i]);
        }
    }

    #[test]
    fn empty_window_errors() {
        let data = random_data(50, 1, 4, |t, _| t);
        let err = local_fit(&data, 10.0, &[0.0], &params(0.2, vec![0.2])).unwrap_err();
        assert!(matches!(err, Error::NoLocalData { .. }));
    }

    #[test]
    fn too_few_points_is_rank_deficient_not_error() {
        let data = Dataset::new(vec![1.0, 2.0], vec![0.0, 0.1], vec![0.0, 0.0], 1).unwrap();
        let fit = local_fit(&data, 0.0, &[0.0], &params(1.0, vec![1.0])).unwrap();
        assert!(fit.rank_deficient);
        assert!(fit.beta.iter().chain(&fit.alpha).all(|v| v.is_finite()));
        assert!(normal_equation_residual(&data, 0.0, &[0.0], &params(1.0, vec![1.0]), &fit.coefficients()) < 1e-8);
    }

    #[test]
    fn weight_locality_is_bit_exact() {
        let data = random_data(300, 2, 5, |t, s| t.sin() + s[0] * s[1]);
        let p = params(0.3, vec![0.4, 0.4]);
        let (t0, s0) = (0.0, [0.1, -0.1]);
        let base = local_fit(&data, t0, &s0, &p).unwrap();
        // Perturb every observation outside the window (in either T or S).
        let mut y = data.y().to_vec();
        let mut t = data.t().to_vec();
        let mut changed = 0;
        for i in 0..data.n() {
            let w = p.kernel_t.eval((t[i] - t0) / p.h)
                * p.kernel_s.eval((data.s_row(i)[0] - s0[0]) / p.b[0])
                * p.kernel_s.eval((data.s_row(i)[1] - s0[1]) / p.b[1]);
            if w == 0.0 {
                y[i] += 17.0;
                if (t[i] - t0).abs() >= p.h {
                    t[i] += 0.01 * (t[i] - t0).signum();
                }
                changed += 1;
            }
        }
        assert!(changed > 100);
        let moved = Dataset::new(y, t, data.s_flat().to_vec(), 2).unwrap();
        let again = local_fit(&moved, t0, &s0, &p).unwrap();
        assert_eq!(base, again);
    }

    #[test]
    fn prefix_sums_agree_with_direct() {
        let data = random_data(600, 1, 6, |t, s| t * t * t - 2.0 * s[0] + (3.0 * s[0]).sin());
        let p = params(0.5, vec![0.3]);
        let direct = p.clone().with_accumulation(Accumulation::Direct);
        let fast_engine = Engine::new(&data, &p).unwrap();
        let direct_engine = Engine::new(&data, &direct).unwrap();
        let mut ws = Workspace::new(4);
        for &t0 in &[-0.7, 0.0, 0.45] {
            let fast = fast_engine.slice(t0);
            assert!(fast.prefix.is_some());
            let slow = direct_engine.slice(t0);
            for &s0 in &[-0.9, -0.2, 0.0, 0.6, 0.99] {
                let a = fast.fit(&[s0], &mut ws).unwrap();
                let b = slow.fit(&[s0], &mut ws).unwrap();
                assert_eq!(a.eff_points, b.eff_points);
                for (x, y) in a.coefficients().iter().zip(b.coefficients()) {
                    assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()), "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn duplicate_rows_match_multiplicity() {
        let data = random_data(80, 1, 7, |t, s| t + s[0] * s[0]);
        let idx: Vec<usize> = (0..80).chain(0..40).collect();
        let doubled = data.select(&idx);
        let p = params(0.7, vec![0.8]).with_accumulation(Accumulation::Direct);
        let a = local_fit(&doubled, 0.1, &[0.0], &p).unwrap();
        // Reference: the same problem with explicit duplicate rows and no merging.
        let r = normal_equation_residual(&doubled, 0.1, &[0.0], &p, &a.coefficients());
        assert!(r < 1e-10);
    }

    #[test]
    fn scale_equivariance() {
        let data = random_data(200, 1, 8, |t, s| (2.0 * t).cos() + s[0]);
        let p = params(0.5, vec![0.5]);
        let c = 3.0;
        let scaled = Dataset::new(data.y().iter().map(|v| c * v).collect(), data.t().to_vec(), data.s_flat().to_vec(), 1).unwrap();
        let a = local_fit(&data, 0.2, &[0.1], &p).unwrap();
        let b = local_fit(&scaled, 0.2, &[0.1], &p).unwrap();
        for (x, y) in a.coefficients().iter().zip(b.coefficients()) {
            assert!((c * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn polynomial_exactness(
            seed in 0u64..1000,
            c in proptest::collection::vec(-2.0f64..2.0, 3),
            l in proptest::collection::vec(-3.0f64..3.0, 2),
            t0 in -0.5f64..0.5,
            s0 in proptest::collection::vec(-0.5f64..0.5, 2),
        ) {
            let poly = |t: f64| c[0] + c[1] * t + c[2] * t * t;
            let data = random_data(250, 2, seed, |t, s| poly(t) + l[0] * s[0] + l[1] * s[1]);
            let p = params(0.6, vec![0.7, 0.7]);
            let fit = local_fit(&data, t0, &s0, &p).unwrap();
            prop_assume!(!fit.rank_deficient);
            let expect_mu = poly(t0) + l[0] * s0[0] + l[1] * s0[1];
            prop_assert!((mu_hat(&fit) - expect_mu).abs() < 1e-6);
            prop_assert!((beta2_hat(&fit) - (c[1] + 2.0 * c[2] * t0)).abs() < 1e-6);
            prop_assert!(normal_equation_residual(&data, t0, &s0, &p, &fit.coefficients()) <= 1e-8);
        }
    }
}
