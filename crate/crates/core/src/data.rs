use crate::error::{Error, Result};

/// Observational sample: outcome `y`, treatment `t`, and an `n × d` covariate
/// block stored row-major. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    t: Vec<f64>,
    s: Vec<f64>,
    d: usize,
}

impl Dataset {
    /// Build from columns; `s` is row-major with `d` entries per observation.
    pub fn new(y: Vec<f64>, t: Vec<f64>, s: Vec<f64>, d: usize) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidInput("dataset must have at least one row".into()));
        }
        if t.len() != n || s.len() != n * d {
            return Err(Error::InvalidInput(format!(
                "column lengths disagree: y {n}, t {}, s {} (expected {})",
                t.len(),
                s.len(),
                n * d
            )));
        }
        if let Some(i) = y
            .iter()
            .chain(&t)
            .chain(&s)
            .position(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(format!("non-finite entry at flat position {i}")));
        }
        Ok(Self { y, t, s, d })
    }

    /// Build from a list of covariate rows.
    pub fn from_rows(y: Vec<f64>, t: Vec<f64>, s_rows: &[Vec<f64>]) -> Result<Self> {
        let d = s_rows.first().map_or(0, Vec::len);
        if s_rows.len() != y.len() && !(d == 0 && s_rows.is_empty()) {
            return Err(Error::InvalidInput("covariate row count mismatch".into()));
        }
        if s_rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged covariate rows".into()));
        }
        let s = s_rows.iter().flatten().copied().collect();
        Self::new(y, t, s, d)
    }

    /// Dataset without covariates.
    pub fn without_covariates(y: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        Self::new(y, t, Vec::new(), 0)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    /// Row-major covariate block.
    pub fn s_flat(&self) -> &[f64] {
        &self.s
    }

    #[inline]
    pub fn s_row(&self, i: usize) -> &[f64] {
        &self.s[i * self.d..(i + 1) * self.d]
    }

    pub fn s_col(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.s[i * self.d + j]).collect()
    }

    pub fn y_mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.n() as f64
    }

    /// Rows picked by index (with repetition), in the given order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut y = Vec::with_capacity(idx.len());
        let mut t = Vec::with_capacity(idx.len());
        let mut s = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            y.push(self.y[i]);
            t.push(self.t[i]);
            s.extend_from_slice(self.s_row(i));
        }
        Dataset { y, t, s, d: self.d }
    }

    /// Treatment values sorted ascending (all `n` order statistics).
    pub fn sorted_t(&self) -> Vec<f64> {
        let mut t = self.t.clone();
        t.sort_by(f64::total_cmp);
        t
    }

    /// Distinct treatment values, ascending.
    pub fn unique_sorted_t(&self) -> Vec<f64> {
        let mut t = self.sorted_t();
        t.dedup();
        t
    }
}

/// Empirical quantile with linear interpolation between order statistics
/// (the default `type 7` rule). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sample standard deviation with denominator `n − 1`.
pub fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}
