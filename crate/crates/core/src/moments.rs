//! Covariate-major accumulation for many fits at one covariate value.
//!
//! With `s` fixed, every row's covariate weight and covariate offsets are
//! fixed too. With an Epanechnikov treatment kernel, each Gram entry at `t`
//! is then a polynomial in `τ = (t − c)/h` whose coefficients are window
//! sums of `w_j u_j^a` (`u_j = (T_j − c)/h`). Prefix sums over the
//! treatment-sorted rows give those window sums in O(1), so a whole curve of
//! fits at one `s` costs one pass over the data plus a small solve per `t`.
//!
//! Expanding `(u − τ)^e` binomially loses roughly `log10(U^(2q+2))` digits,
//! where `U` bounds `|u|` and `|τ|`; [`usable`] refuses configurations that
//! would lose more than [`MAX_AMPLIFICATION`].

use crate::error::{Error, Result};
use crate::kernels::KernelKind;
use crate::locpoly::{solve_gram, Engine, FitSummary, Workspace};
use crate::params::Accumulation;

const MAX_AMPLIFICATION: f64 = 1e5;

/// Whether the moment sweep may serve fits at treatment levels in `[t_lo, t_hi]`.
pub(crate) fn usable(engine: &Engine<'_>, t_lo: f64, t_hi: f64) -> bool {
    let p = engine.params();
    if p.kernel_t != KernelKind::Epanechnikov || p.accumulation != Accumulation::Auto {
        return false;
    }
    let ts = engine.t_sorted();
    let (lo, hi) = (ts[0].min(t_lo), ts[ts.len() - 1].max(t_hi));
    let c = center(engine);
    let u = ((hi - c).abs().max((lo - c).abs())) / p.h;
    let e = (2 * engine.q() + 2) as i32;
    u.max(1.0).powi(e) <= MAX_AMPLIFICATION
}

fn center(engine: &Engine<'_>) -> f64 {
    let ts = engine.t_sorted();
    0.5 * (ts[0] + ts[ts.len() - 1])
}

struct Layout {
    /// Highest treatment power needed, `2q + 2`.
    top: usize,
    mv: usize,
    mvv: usize,
    my: usize,
    mvy: usize,
    block: usize,
    pairs: Vec<(usize, usize)>,
}

impl Layout {
    fn new(q: usize, d: usize) -> Self {
        let top = 2 * q + 2;
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect();
        let mv = top + 1;
        let mvv = mv + d * (q + 3);
        let my = mvv + pairs.len() * 3;
        let mvy = my + q + 3;
        let block = mvy + d * 3;
        Self {
            top,
            mv,
            mvv,
            my,
            mvy,
            block,
            pairs,
        }
    }
}

/// Binomial shift coefficients `C(e, a) (−τ)^(e−a)` for each treatment level
/// of a grid, shared by every covariate value.
pub(crate) struct ShiftTable {
    tri: usize,
    coef: Vec<f64>,
}

impl ShiftTable {
    pub(crate) fn new(engine: &Engine<'_>, grid: &[f64]) -> Self {
        let top = 2 * engine.q() + 2;
        let tri = (top + 1) * (top + 2) / 2;
        let c = center(engine);
        let h = engine.params().h;
        let mut coef = Vec::with_capacity(grid.len() * tri);
        let mut ntau = vec![1.0; top + 1];
        let mut binom = vec![1.0; top + 1];
        for &t in grid {
            let tau = (t - c) / h;
            for a in 1..=top {
                ntau[a] = ntau[a - 1] * -tau;
            }
            for e in 0..=top {
                // Row e of Pascal's triangle, built in place from row e − 1.
                if e > 0 {
                    binom[e] = 1.0;
                    for a in (1..e).rev() {
                        binom[a] += binom[a - 1];
                    }
                }
                for a in 0..=e {
                    coef.push(binom[a] * ntau[e - a]);
                }
            }
            binom.iter_mut().for_each(|b| *b = 1.0);
        }
        Self { tri, coef }
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.coef[k * self.tri..(k + 1) * self.tri]
    }
}

/// Prefix sums of the weighted moments for one covariate value.
pub(crate) struct MomentSweep<'e> {
    engine: &'e Engine<'e>,
    layout: Layout,
    /// Treatment values of rows with positive covariate weight, ascending.
    t: Vec<f64>,
    prefix: Vec<f64>,
    count: Vec<f64>,
    window: Vec<f64>,
    shifted: Vec<f64>,
    /// Window bounds of the previous query, reused when `t` moves forward.
    last: Option<(f64, usize, usize)>,
}

impl<'e> MomentSweep<'e> {
    pub(crate) fn new(engine: &'e Engine<'e>, s: &[f64]) -> Self {
        let params = engine.params();
        let (q, d) = (engine.q(), engine.d());
        let layout = Layout::new(q, d);
        let c = center(engine);
        let h = params.h;
        let ks = params.kernel_s;
        let block = layout.block;

        let mut t = Vec::new();
        let mut prefix = vec![0.0; block];
        let mut count = vec![0.0];
        let mut v = vec![0.0; d];
        let mut up = vec![0.0; layout.top + 1];
        let mut term = vec![0.0; block];
        for j in 0..engine.len() {
            let sj = engine.row_s(j);
            let mut w = engine.row_mult(j);
            for k in 0..d {
                v[k] = (sj[k] - s[k]) / params.b[k];
                w *= ks.eval(v[k]);
            }
            if w <= 0.0 {
                continue;
            }
            let tj = engine.row_t(j);
            let yj = engine.row_y(j);
            let u = (tj - c) / h;
            up[0] = w;
            for a in 1..=layout.top {
                up[a] = up[a - 1] * u;
            }
            term[..=layout.top].copy_from_slice(&up);
            for k in 0..d {
                for a in 0..q + 3 {
                    term[layout.mv + k * (q + 3) + a] = up[a] * v[k];
                }
            }
            for (m, &(k, l)) in layout.pairs.iter().enumerate() {
                for a in 0..3 {
                    term[layout.mvv + m * 3 + a] = up[a] * v[k] * v[l];
                }
            }
            for a in 0..q + 3 {
                term[layout.my + a] = up[a] * yj;
            }
            for k in 0..d {
                for a in 0..3 {
                    term[layout.mvy + k * 3 + a] = up[a] * v[k] * yj;
                }
            }
            let base = prefix.len() - block;
            for m in 0..block {
                let prev = prefix[base + m];
                prefix.push(prev + term[m]);
            }
            count.push(count[count.len() - 1] + engine.row_mult(j));
            t.push(tj);
        }

        Self {
            engine,
            window: vec![0.0; block],
            shifted: vec![0.0; layout.top + 1],
            layout,
            t,
            prefix,
            count,
            last: None,
        }
    }

    /// Local fit at `(t, s)`: the same problem `Slice::fit` solves.
    #[cfg(test)]
    pub(crate) fn fit(&mut self, t: f64, ws: &mut Workspace) -> Result<FitSummary> {
        let table = ShiftTable::new(self.engine, &[t]);
        self.fit_at(t, table.row(0), ws)
    }

    /// As [`fit`](Self::fit) with the shift coefficients of `t` precomputed;
    /// cheapest when successive calls have nondecreasing `t`.
    pub(crate) fn fit_row(&mut self, t: f64, table: &ShiftTable, k: usize, ws: &mut Workspace) -> Result<FitSummary> {
        self.fit_at(t, table.row(k), ws)
    }

    fn bounds(&mut self, t: f64) -> (usize, usize) {
        let h = self.engine.params().h;
        let n = self.t.len();
        let (mut lo, mut hi) = match self.last {
            Some((prev, lo, hi)) if t >= prev => (lo, hi),
            _ => (
                self.t.partition_point(|&v| v <= t - h),
                self.t.partition_point(|&v| v < t + h),
            ),
        };
        while lo < n && self.t[lo] <= t - h {
            lo += 1;
        }
        while hi < n && self.t[hi] < t + h {
            hi += 1;
        }
        self.last = Some((t, lo, hi));
        (lo, hi)
    }

    fn fit_at(&mut self, t: f64, coef: &[f64], ws: &mut Workspace) -> Result<FitSummary> {
        let e = self.engine;
        let params = e.params();
        let (q, d) = (e.q(), e.d());
        let (lo, hi) = self.bounds(t);
        if self.count[hi] - self.count[lo] <= 0.0 {
            return Err(Error::NoLocalData { t });
        }
        let l = &self.layout;
        let block = l.block;
        let (ph, pl) = (&self.prefix[hi * block..(hi + 1) * block], &self.prefix[lo * block..(lo + 1) * block]);
        for ((w, a), b) in self.window.iter_mut().zip(ph).zip(pl) {
            *w = a - b;
        }
        let win = &self.window;
        // Moments of (u − τ)^e from the window moments of u^a starting at `off`.
        let shift = |off: usize, top: usize, out: &mut [f64]| {
            for ex in 0..=top {
                let row = &coef[ex * (ex + 1) / 2..ex * (ex + 1) / 2 + ex + 1];
                out[ex] = row.iter().zip(&win[off..off + ex + 1]).map(|(c, m)| c * m).sum();
            }
        };
        let kt = |m: &[f64], ex: usize| 0.75 * (m[ex] - m[ex + 2]);

        let p = q + 1 + d;
        let out = &mut self.shifted;
        shift(0, l.top, out);
        for i in 0..=q {
            for k in i..=q {
                ws.g[i * p + k] = kt(out, i + k);
            }
        }
        for c in 0..d {
            shift(l.mv + c * (q + 3), q + 2, out);
            for i in 0..=q {
                ws.g[i * p + q + 1 + c] = kt(out, i);
            }
        }
        for (m, &(a, b)) in l.pairs.iter().enumerate() {
            shift(l.mvv + m * 3, 2, out);
            ws.g[(q + 1 + a) * p + q + 1 + b] = kt(out, 0);
        }
        shift(l.my, q + 2, out);
        for i in 0..=q {
            ws.r[i] = kt(out, i);
        }
        for c in 0..d {
            shift(l.mvy + c * 3, 2, out);
            ws.r[q + 1 + c] = kt(out, 0);
        }

        solve_gram(ws, q, params);
        Ok(FitSummary {
            mu: ws.r[0],
            beta2: ws.r[1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::params::EstimParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = Vec::new();
        let mut t = Vec::new();
        let mut s = Vec::new();
        for _ in 0..n {
            let si: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ti = si.iter().sum::<f64>() * 0.8 + rng.random_range(-0.5..0.5);
            y.push(ti * ti - ti + si.iter().map(|v| v.sin()).sum::<f64>() + rng.random_range(-0.2..0.2));
            t.push(ti);
            s.extend(si);
        }
        Dataset::new(y, t, s, d).unwrap()
    }

    #[test]
    fn agrees_with_direct_fits() {
        for (d, kernel_s) in [(1, KernelKind::Epanechnikov), (2, KernelKind::Epanechnikov), (2, KernelKind::Gaussian), (0, KernelKind::Epanechnikov)] {
            let ds = data(300, d, 11 + d as u64);
            let p = EstimParams::new(0.6, vec![0.5; d], 0.3).with_kernels(KernelKind::Epanechnikov, kernel_s, KernelKind::Gaussian);
            let direct = p.clone().with_accumulation(Accumulation::Direct);
            let fast_engine = Engine::new(&ds, &p).unwrap();
            let slow_engine = Engine::new(&ds, &direct).unwrap();
            let mut ws = Workspace::new(p.design_width());
            for i in (0..300).step_by(37) {
                let s = ds.s_row(i).to_vec();
                let mut sweep = MomentSweep::new(&fast_engine, &s);
                for &t in &[-1.2, -0.4, 0.0, 0.35, 0.9] {
                    let slice = slow_engine.slice(t);
                    match (sweep.fit(t, &mut ws), slice.fit(&s, &mut ws)) {
                        // Near-interpolating windows are too ill-conditioned to compare tightly.
                        (Ok(_), Ok(b)) if b.eff_points < 30 => {}
                        (Ok(a), Ok(b)) => {
                            let b = FitSummary { mu: b.beta[0], beta2: b.beta[1] };
                            assert!((a.mu - b.mu).abs() < 1e-8 * (1.0 + b.mu.abs()), "d={d} t={t} i={i} mu {} vs {}", a.mu, b.mu);
                            assert!((a.beta2 - b.beta2).abs() < 1e-7 * (1.0 + b.beta2.abs()), "d={d} beta2 {} vs {}", a.beta2, b.beta2);
                        }
                        (Err(a), Err(b)) => assert_eq!(a.kind(), b.kind()),
                        (a, b) => panic!("disagree at t={t}: {a:?} vs {b:?}"),
                    }
                }
            }
        }
    }

    #[test]
    fn refuses_narrow_bandwidth() {
        let ds = data(100, 1, 3);
        let wide = EstimParams::new(1.0, vec![0.5], 0.3);
        let narrow = EstimParams::new(0.05, vec![0.5], 0.3);
        assert!(usable(&Engine::new(&ds, &wide).unwrap(), 0.0, 0.0));
        assert!(!usable(&Engine::new(&ds, &narrow).unwrap(), 0.0, 0.0));
        let direct = wide.clone().with_accumulation(Accumulation::Direct);
        assert!(!usable(&Engine::new(&ds, &direct).unwrap(), 0.0, 0.0));
    }
}
