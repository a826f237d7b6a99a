//! Dense least squares via Householder QR with column pivoting.
//!
//! Rank is decided on the diagonal of `R`: a pivot `|R_kk|` below
//! `tol * |R_00|` ends the numerical rank. Rank-deficient systems are finished
//! with a complete orthogonal decomposition so the returned coefficients are
//! the minimum-norm least-squares solution.

/// Row-major dense matrix, just enough for the small systems solved here.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution {
    pub x: Vec<f64>,
    pub rank: usize,
}

impl LstsqSolution {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.x.len()
    }
}

/// Minimum-norm solution of `min ‖A x − b‖₂` with relative rank tolerance `tol`.
pub fn lstsq(a: &Matrix, b: &[f64], tol: f64) -> LstsqSolution {
    let mut a = a.clone();
    let mut b = b.to_vec();
    lstsq_in_place(&mut a, &mut b, tol)
}

/// As [`lstsq`], overwriting `a` and `b` with factorization workspace.
pub fn lstsq_in_place(a: &mut Matrix, b: &mut [f64], tol: f64) -> LstsqSolution {
    let (m, n) = (a.rows, a.cols);
    assert_eq!(b.len(), m, "rhs length mismatch");
    let steps = m.min(n);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut diag = vec![0.0; steps];
    let mut norms = vec![0.0; n];

    for k in 0..steps {
        // Recomputing trailing column norms is cheap for the narrow systems here
        // and avoids the downdating cancellation of the classic scheme.
        for j in k..n {
            let mut s = 0.0;
            for i in k..m {
                let v = a.data[i * n + j];
                s += v * v;
            }
            norms[j] = s;
        }
        let mut piv = k;
        for j in k + 1..n {
            if norms[j] > norms[piv] {
                piv = j;
            }
        }
        if piv != k {
            for i in 0..m {
                a.data.swap(i * n + k, i * n + piv);
            }
            perm.swap(k, piv);
            norms.swap(k, piv);
        }

        let alpha = norms[k].sqrt();
        if alpha == 0.0 {
            diag[k] = 0.0;
            continue;
        }
        let x0 = a.data[k * n + k];
        let beta = if x0 >= 0.0 { -alpha } else { alpha };
        // v = x - beta e1, stored in place below the diagonal with v_k kept separately.
        let vk = x0 - beta;
        a.data[k * n + k] = vk;
        let vnorm2 = norms[k] - x0 * x0 + vk * vk;
        if vnorm2 > 0.0 {
            for j in k + 1..n {
                let mut dot = 0.0;
                for i in k..m {
                    dot += a.data[i * n + k] * a.data[i * n + j];
                }
                let f = 2.0 * dot / vnorm2;
                if f != 0.0 {
                    for i in k..m {
                        a.data[i * n + j] -= f * a.data[i * n + k];
                    }
                }
            }
            let mut dot = 0.0;
            for i in k..m {
                dot += a.data[i * n + k] * b[i];
            }
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                b[i] -= f * a.data[i * n + k];
            }
        }
        diag[k] = beta;
    }

    let lead = diag.first().map_or(0.0, |d| d.abs());
    let rank = if lead == 0.0 {
        0
    } else {
        diag.iter().take_while(|d| d.abs() > tol * lead).count()
    };

    // Upper-trapezoidal R (rank × n), diagonal from `diag`, strict upper part from `a`.
    let r_at = |i: usize, j: usize| -> f64 {
        if i == j {
            diag[i]
        } else {
            a.data[i * n + j]
        }
    };

    let mut y = vec![0.0; n];
    if rank == n {
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= r_at(i, j) * y[j];
            }
            y[i] = s / diag[i];
        }
    } else if rank > 0 {
        // Complete orthogonal decomposition: R1ᵀ = Z [L; 0] with R1 = R[0..rank, ..].
        let r = rank;
        let mut w = Matrix::zeros(n, r);
        for i in 0..r {
            for j in i..n {
                w.data[j * r + i] = r_at(i, j);
            }
        }
        let mut vs: Vec<(Vec<f64>, f64)> = Vec::with_capacity(r);
        for k in 0..r {
            let mut s = 0.0;
            for i in k..n {
                s += w.data[i * r + k] * w.data[i * r + k];
            }
            let alpha = s.sqrt();
            let x0 = w.data[k * r + k];
            let beta = if x0 >= 0.0 { -alpha } else { alpha };
            let mut v = vec![0.0; n];
            v[k] = x0 - beta;
            for i in k + 1..n {
                v[i] = w.data[i * r + k];
            }
            let vnorm2 = s - x0 * x0 + v[k] * v[k];
            if vnorm2 > 0.0 {
                for j in k..r {
                    let mut dot = 0.0;
                    for i in k..n {
                        dot += v[i] * w.data[i * r + j];
                    }
                    let f = 2.0 * dot / vnorm2;
                    for i in k..n {
                        w.data[i * r + j] -= f * v[i];
                    }
                }
            }
            vs.push((v, vnorm2));
        }
        // Lᵀ z = c where L = W[0..r, 0..r] is upper triangular, so Lᵀ is lower.
        let mut z = vec![0.0; n];
        for i in 0..r {
            let mut s = b[i];
            for j in 0..i {
                s -= w.data[j * r + i] * z[j];
            }
            z[i] = s / w.data[i * r + i];
        }
        // y = Z z, applying reflectors in reverse.
        for (k, (v, vnorm2)) in vs.iter().enumerate().rev() {
            if *vnorm2 > 0.0 {
                let dot: f64 = (k..n).map(|i| v[i] * z[i]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..n {
                    z[i] -= f * v[i];
                }
            }
        }
        y = z;
    }

    let mut x = vec![0.0; n];
    for (k, &p) in perm.iter().enumerate() {
        x[p] = y[k];
    }
    LstsqSolution { x, rank }
}

/// Solve the symmetric positive semidefinite system `G x = r` by an `LDLᵀ`
/// factorization with diagonal pivoting, in place.
///
/// `g` is `p × p` row-major (only the lower triangle is read) and is
/// overwritten; `r` receives the solution. Returns `false`, leaving the
/// buffers in an unspecified state, as soon as a pivot falls to `tol` times
/// the first (largest) pivot or below; the caller then needs a
/// rank-revealing solve.
pub fn solve_psd_pivoted(g: &mut [f64], r: &mut [f64], p: usize, tol: f64, perm: &mut [usize]) -> bool {
    debug_assert!(g.len() == p * p && r.len() == p && perm.len() == p);
    for (k, v) in perm.iter_mut().enumerate() {
        *v = k;
    }
    let mut d0 = 0.0;
    for k in 0..p {
        let mut piv = k;
        for j in k + 1..p {
            if g[j * p + j] > g[piv * p + piv] {
                piv = j;
            }
        }
        if piv != k {
            // Symmetric swap of rows/columns k and piv, lower triangle only.
            for j in 0..k {
                g.swap(k * p + j, piv * p + j);
            }
            g.swap(k * p + k, piv * p + piv);
            for i in k + 1..piv {
                g.swap(i * p + k, piv * p + i);
            }
            for i in piv + 1..p {
                g.swap(i * p + k, i * p + piv);
            }
            r.swap(k, piv);
            perm.swap(k, piv);
        }
        let dk = g[k * p + k];
        if k == 0 {
            d0 = dk;
        }
        if !(dk > tol * d0) || !(d0 > 0.0) {
            return false;
        }
        for i in k + 1..p {
            g[i * p + k] /= dk;
        }
        for i in k + 1..p {
            let lik = g[i * p + k] * dk;
            for j in k + 1..=i {
                g[i * p + j] -= lik * g[j * p + k];
            }
        }
    }
    for i in 0..p {
        let mut s = r[i];
        for j in 0..i {
            s -= g[i * p + j] * r[j];
        }
        r[i] = s;
    }
    for i in 0..p {
        r[i] /= g[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = r[i];
        for j in i + 1..p {
            s -= g[j * p + i] * r[j];
        }
        r[i] = s;
    }
    // Undo the permutation: position k holds unknown perm[k].
    let mut k = 0;
    while k < p {
        let target = perm[k];
        if target != k {
            r.swap(k, target);
            perm.swap(k, target);
        } else {
            k += 1;
        }
    }
    true
}
