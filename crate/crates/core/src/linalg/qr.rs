//! Householder QR with column pivoting and least-squares solves.
//!
//! Full-rank systems are solved by back substitution on the pivoted `R`.
//! Rank-deficient systems get the minimum-norm solution through a complete
//! orthogonal decomposition: the leading `rank` rows of `R` are
//! re-triangularized from the right with a second QR of their transpose.

use serde::Serialize;

use super::matrix::Matrix;
use crate::error::{contract, Result};

/// A single Householder reflector `I - beta·v·vᵀ` acting on rows `start..`.
#[derive(Debug, Clone)]
struct Reflector {
    start: usize,
    v: Vec<f64>,
    beta: f64,
}

impl Reflector {
    /// Reflector mapping `x` onto a multiple of `e₁`; `None` when `x` is zero.
    fn annihilating(start: usize, x: &[f64]) -> (Option<Self>, f64) {
        let norm = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (None, 0.0);
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|t| t * t).sum();
        if vtv == 0.0 {
            return (None, x[0]);
        }
        (
            Some(Self {
                start,
                v,
                beta: 2.0 / vtv,
            }),
            alpha,
        )
    }

    /// Applies the reflector to columns `col_from..` of a row-major `rows x cols` buffer.
    fn apply_left(&self, buf: &mut [f64], cols: usize, col_from: usize) {
        for j in col_from..cols {
            let mut s = 0.0;
            for (t, vi) in self.v.iter().enumerate() {
                s += vi * buf[(self.start + t) * cols + j];
            }
            if s == 0.0 {
                continue;
            }
            let s = s * self.beta;
            for (t, vi) in self.v.iter().enumerate() {
                buf[(self.start + t) * cols + j] -= s * vi;
            }
        }
    }

    fn apply_vec(&self, x: &mut [f64]) {
        let s: f64 = self
            .v
            .iter()
            .enumerate()
            .map(|(t, vi)| vi * x[self.start + t])
            .sum::<f64>()
            * self.beta;
        for (t, vi) in self.v.iter().enumerate() {
            x[self.start + t] -= s * vi;
        }
    }
}

/// Pivoted QR factorization `A·P = Q·R` kept in compact form.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    rows: usize,
    cols: usize,
    /// Row-major; the upper triangle holds `R`.
    r: Vec<f64>,
    reflectors: Vec<Option<Reflector>>,
    /// `perm[k]` is the original column placed at position `k`.
    perm: Vec<usize>,
}

impl PivotedQr {
    pub fn factor(a: &Matrix, pivot: bool) -> Self {
        let (n, p) = a.shape();
        let mut r = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..p).collect();
        let steps = n.min(p);
        let mut reflectors = Vec::with_capacity(steps);
        let mut col = vec![0.0; n];
        for k in 0..steps {
            if pivot {
                let mut best = k;
                let mut best_norm = -1.0;
                for j in k..p {
                    let s: f64 = (k..n).map(|i| r[i * p + j] * r[i * p + j]).sum();
                    if s > best_norm {
                        best_norm = s;
                        best = j;
                    }
                }
                if best != k {
                    for i in 0..n {
                        r.swap(i * p + k, i * p + best);
                    }
                    perm.swap(k, best);
                }
            }
            let m = n - k;
            for t in 0..m {
                col[t] = r[(k + t) * p + k];
            }
            let (h, alpha) = Reflector::annihilating(k, &col[..m]);
            if let Some(h) = &h {
                h.apply_left(&mut r, p, k + 1);
                r[k * p + k] = alpha;
                for i in k + 1..n {
                    r[i * p + k] = 0.0;
                }
            }
            reflectors.push(h);
        }
        Self {
            rows: n,
            cols: p,
            r,
            reflectors,
            perm,
        }
    }

    #[inline]
    fn r_at(&self, i: usize, j: usize) -> f64 {
        self.r[i * self.cols + j]
    }

    /// Diagonal of `R`.
    pub fn r_diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|k| self.r_at(k, k)).collect()
    }

    /// Numerical rank with the usual `max(n,p)·ε·|R₀₀|` cutoff.
    pub fn rank(&self) -> usize {
        let diag = self.r_diagonal();
        let Some(first) = diag.first() else {
            return 0;
        };
        let tol = self.rows.max(self.cols) as f64 * f64::EPSILON * first.abs();
        if first.abs() == 0.0 {
            return 0;
        }
        diag.iter().take_while(|d| d.abs() > tol).count()
    }

    /// Applies `Qᵀ` to every column of `b` in place.
    fn apply_qt(&self, b: &mut Matrix) {
        let q = b.cols();
        for h in self.reflectors.iter().flatten() {
            h.apply_left(b.as_mut_slice(), q, 0);
        }
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }
}

/// Outcome of a least-squares solve together with its rank report.
#[derive(Debug, Clone, Serialize)]
pub struct LeastSquares {
    pub solution: Matrix,
    pub rank: usize,
    pub cols: usize,
    pub rank_deficient: bool,
}

/// Column-wise least squares `argmin_W ‖A·W − B‖_F` via pivoted Householder QR.
///
/// Rank-deficient `A` yields the minimum-norm solution and sets `rank_deficient`.
pub fn least_squares(a: &Matrix, b: &Matrix) -> Result<LeastSquares> {
    let (n, p) = a.shape();
    if n == 0 || p == 0 {
        return Err(contract(format!("least_squares: empty design matrix {n}x{p}")));
    }
    if b.rows() != n {
        return Err(contract(format!(
            "least_squares: A has {n} rows, B has {}",
            b.rows()
        )));
    }
    let q = b.cols();
    let qr = PivotedQr::factor(a, true);
    let rank = qr.rank();
    let mut c = b.clone();
    qr.apply_qt(&mut c);

    // z solves the permuted system; row k of z belongs to original column perm[k].
    let mut z = Matrix::zeros(p, q);
    if rank == p {
        for col in 0..q {
            for i in (0..p).rev() {
                let mut s = c[(i, col)];
                for j in i + 1..p {
                    s -= qr.r_at(i, j) * z[(j, col)];
                }
                z[(i, col)] = s / qr.r_at(i, i);
            }
        }
    } else if rank > 0 {
        // T = R[0..rank, 0..p]; factor Tᵀ = Q₂·R₂ so T = R₂ᵀ·Q₂ᵀ.
        let mut tt = Matrix::zeros(p, rank);
        for i in 0..rank {
            for j in i..p {
                tt[(j, i)] = qr.r_at(i, j);
            }
        }
        let qr2 = PivotedQr::factor(&tt, false);
        for col in 0..q {
            // Forward substitution R₂ᵀ·y = c[0..rank].
            let mut y = vec![0.0; p];
            for i in 0..rank {
                let mut s = c[(i, col)];
                for j in 0..i {
                    s -= qr2.r_at(j, i) * y[j];
                }
                y[i] = s / qr2.r_at(i, i);
            }
            // z = Q₂·[y; 0]
            for h in qr2.reflectors.iter().rev().flatten() {
                h.apply_vec(&mut y);
            }
            for (i, v) in y.into_iter().enumerate() {
                z[(i, col)] = v;
            }
        }
    }

    let mut w = Matrix::zeros(p, q);
    for (k, &orig) in qr.perm.iter().enumerate() {
        w.row_mut(orig).copy_from_slice(z.row(k));
    }
    Ok(LeastSquares {
        solution: w,
        rank,
        cols: p,
        rank_deficient: rank < p,
    })
}
