//! Banded direct solvers and a preconditioned conjugate-gradient solver.
//!
//! Tridiagonal solves use the Thomas algorithm; periodic (cyclic) systems are
//! reduced to two tridiagonal solves with a Sherman-Morrison correction.
//! [`TridiagonalFactor`] keeps the elimination coefficients so that a matrix
//! reused across time steps is only factored once.

use crate::error::{invalid, Error, Result};

/// Default relative-residual tolerance of the iterative solver.
pub const DEFAULT_CG_TOL: f64 = 1e-12;
pub const DEFAULT_CG_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    /// `sub[k]` couples row `k + 1` to column `k`.
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    /// `sup[k]` couples row `k` to column `k + 1`.
    pub sup: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    fn check(&self) -> Result<()> {
        let n = self.diag.len();
        if n == 0 {
            return Err(invalid("tridiagonal system must have at least one row"));
        }
        if self.sub.len() != n - 1 || self.sup.len() != n - 1 || self.rhs.len() != n {
            return Err(invalid("tridiagonal band lengths do not match"));
        }
        Ok(())
    }

    /// `A x` for the stored matrix.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        tridiagonal_apply(&self.sub, &self.diag, &self.sup, x)
    }
}

pub(crate) fn tridiagonal_apply(sub: &[f64], diag: &[f64], sup: &[f64], x: &[f64]) -> Vec<f64> {
    let n = diag.len();
    (0..n)
        .map(|k| {
            let mut v = diag[k] * x[k];
            if k > 0 {
                v += sub[k - 1] * x[k - 1];
            }
            if k + 1 < n {
                v += sup[k] * x[k + 1];
            }
            v
        })
        .collect()
}

/// LU factors of a tridiagonal matrix (Thomas algorithm without pivoting).
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalFactor {
    sub: Vec<f64>,
    /// Reciprocal pivots.
    inv_pivot: Vec<f64>,
    /// Scaled super-diagonal `sup[k] / pivot[k]`.
    upper: Vec<f64>,
}

impl TridiagonalFactor {
    pub fn new(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<Self> {
        let n = diag.len();
        if n == 0 || sub.len() + 1 != n || sup.len() + 1 != n {
            return Err(invalid("tridiagonal band lengths do not match"));
        }
        let mut inv_pivot = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n - 1);
        let mut prev_upper = 0.0;
        for k in 0..n {
            let pivot = if k == 0 {
                diag[0]
            } else {
                diag[k] - sub[k - 1] * prev_upper
            };
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::SingularSystem { row: k });
            }
            let inv = 1.0 / pivot;
            inv_pivot.push(inv);
            if k + 1 < n {
                prev_upper = sup[k] * inv;
                upper.push(prev_upper);
            }
        }
        Ok(Self {
            sub: sub.to_vec(),
            inv_pivot,
            upper,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Overwrite `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        assert_eq!(rhs.len(), n, "rhs length does not match factor");
        rhs[0] *= self.inv_pivot[0];
        for k in 1..n {
            rhs[k] = (rhs[k] - self.sub[k - 1] * rhs[k - 1]) * self.inv_pivot[k];
        }
        for k in (0..n - 1).rev() {
            rhs[k] -= self.upper[k] * rhs[k + 1];
        }
    }

    /// Solve many systems sharing this matrix at once. Unknown `k` of every
    /// system lives in `data[k * width..(k + 1) * width]`, one system per lane.
    pub fn solve_lanes_in_place(&self, data: &mut [f64], width: usize) {
        let n = self.len();
        assert_eq!(data.len(), n * width, "lane data does not match factor");
        for v in &mut data[..width] {
            *v *= self.inv_pivot[0];
        }
        for k in 1..n {
            let (done, rest) = data.split_at_mut(k * width);
            let prev = &done[(k - 1) * width..];
            let cur = &mut rest[..width];
            let (l, inv) = (self.sub[k - 1], self.inv_pivot[k]);
            for (c, p) in cur.iter_mut().zip(prev) {
                *c = (*c - l * p) * inv;
            }
        }
        for k in (0..n - 1).rev() {
            let (head, tail) = data.split_at_mut((k + 1) * width);
            let cur = &mut head[k * width..];
            let next = &tail[..width];
            let u = self.upper[k];
            for (c, x) in cur.iter_mut().zip(next) {
                *c -= u * x;
            }
        }
    }
}

/// Solve a tridiagonal system by the Thomas algorithm.
pub fn solve_tridiagonal(sys: &TridiagonalSystem) -> Result<Vec<f64>> {
    sys.check()?;
    let factor = TridiagonalFactor::new(&sys.sub, &sys.diag, &sys.sup)?;
    let mut x = sys.rhs.clone();
    factor.solve_in_place(&mut x);
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CyclicTridiagonalSystem {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    /// Entry `A[0][n-1]`.
    pub top_right: f64,
    /// Entry `A[n-1][0]`.
    pub bottom_left: f64,
    pub rhs: Vec<f64>,
}

impl CyclicTridiagonalSystem {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut y = tridiagonal_apply(&self.sub, &self.diag, &self.sup, x);
        y[0] += self.top_right * x[n - 1];
        y[n - 1] += self.bottom_left * x[0];
        y
    }
}

/// Factorization of a cyclic tridiagonal matrix for repeated solves.
#[derive(Debug, Clone, PartialEq)]
pub enum CyclicFactor {
    /// Corner entries are zero: plain tridiagonal.
    Plain(TridiagonalFactor),
    /// One or two unknowns: corners fold into the band.
    Small(TridiagonalFactor),
    /// Sherman-Morrison: `A = B + u v^T` with `u = (g, 0, .., 0, bottom_left)`
    /// and `v = (1, 0, .., 0, top_right / g)`.
    Corrected {
        base: TridiagonalFactor,
        /// `B^{-1} u`.
        z: Vec<f64>,
        g: f64,
        top_right: f64,
        denom: f64,
    },
}

impl CyclicFactor {
    pub fn new(
        sub: &[f64],
        diag: &[f64],
        sup: &[f64],
        top_right: f64,
        bottom_left: f64,
    ) -> Result<Self> {
        let n = diag.len();
        if n == 0 || sub.len() + 1 != n || sup.len() + 1 != n {
            return Err(invalid("cyclic band lengths do not match"));
        }
        if top_right == 0.0 && bottom_left == 0.0 {
            return Ok(CyclicFactor::Plain(TridiagonalFactor::new(sub, diag, sup)?));
        }
        match n {
            1 => {
                let d = [diag[0] + top_right + bottom_left];
                return Ok(CyclicFactor::Small(TridiagonalFactor::new(&[], &d, &[])?));
            }
            2 => {
                let l = [sub[0] + bottom_left];
                let u = [sup[0] + top_right];
                return Ok(CyclicFactor::Small(TridiagonalFactor::new(&l, diag, &u)?));
            }
            _ => {}
        }
        let g = -diag[0];
        let mut modified = diag.to_vec();
        modified[0] -= g;
        modified[n - 1] -= bottom_left * top_right / g;
        let base = TridiagonalFactor::new(sub, &modified, sup)?;
        let mut z = vec![0.0; n];
        z[0] = g;
        z[n - 1] = bottom_left;
        base.solve_in_place(&mut z);
        let denom = 1.0 + z[0] + top_right * z[n - 1] / g;
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SingularSystem { row: n - 1 });
        }
        Ok(CyclicFactor::Corrected {
            base,
            z,
            g,
            top_right,
            denom,
        })
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        match self {
            CyclicFactor::Plain(f) | CyclicFactor::Small(f) => f.solve_in_place(rhs),
            CyclicFactor::Corrected {
                base,
                z,
                g,
                top_right,
                denom,
            } => {
                base.solve_in_place(rhs);
                let n = rhs.len();
                let fact = (rhs[0] + top_right * rhs[n - 1] / g) / denom;
                for (x, zk) in rhs.iter_mut().zip(z) {
                    *x -= fact * zk;
                }
            }
        }
    }
}

/// Solve a periodic tridiagonal system.
pub fn solve_cyclic_tridiagonal(sys: &CyclicTridiagonalSystem) -> Result<Vec<f64>> {
    let n = sys.diag.len();
    if n == 0 || sys.rhs.len() != n {
        return Err(invalid("cyclic system rhs length does not match"));
    }
    let f = CyclicFactor::new(&sys.sub, &sys.diag, &sys.sup, sys.top_right, sys.bottom_left)?;
    let mut x = sys.rhs.clone();
    f.solve_in_place(&mut x);
    Ok(x)
}

/// Compressed-row sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if triplets.iter().any(|&(r, c, _)| r >= n || c >= n) {
            return Err(invalid("triplet index out of range"));
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for k in 0..n {
            row_ptr[k + 1] += row_ptr[k];
        }
        Ok(Self {
            n,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .cloned()
            .zip(self.vals[span].iter().cloned())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// Storage slot of entry `(r, c)` if it is in the sparsity pattern.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .binary_search(&c)
            .ok()
            .map(|k| span.start + k)
    }

    /// Stored values, in pattern order; see [`CsrMatrix::position`].
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        y
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|r| {
            self.row(r)
                .all(|(c, v)| (v - self.get(c, r)).abs() <= tol * (1.0 + v.abs()))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetricSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl SparseSymmetricSystem {
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>) -> Result<Self> {
        if rhs.len() != matrix.n() {
            return Err(invalid("rhs length does not match matrix"));
        }
        if !matrix.is_symmetric(1e-12) {
            return Err(invalid("matrix is not symmetric"));
        }
        if let Some(r) = matrix.diagonal().iter().position(|&d| d <= 0.0) {
            return Err(invalid(format!("diagonal entry {r} is not positive")));
        }
        Ok(Self {
            matrix,
            rhs,
            tol: DEFAULT_CG_TOL,
            max_iter: DEFAULT_CG_MAX_ITER,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual `|b - A x| / |b|`.
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradients starting from `x0`.
///
/// The matrix is assumed symmetric positive definite; callers that build it
/// per step skip the symmetry check done by [`SparseSymmetricSystem::new`].
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgSolution> {
    let n = a.n();
    if b.len() != n || x0.is_some_and(|x| x.len() != n) {
        return Err(invalid("vector length does not match matrix"));
    }
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = vec![0.0; n];
    a.mul_into(&x, &mut r);
    for (rk, bk) in r.iter_mut().zip(b) {
        *rk = bk - *rk;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = norm2(&r) / b_norm;
    let mut it = 0;
    while residual > tol {
        if it == max_iter {
            return Err(Error::NonConvergence {
                solver: "conjugate gradient",
                iterations: it,
                residual,
            });
        }
        a.mul_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
        residual = norm2(&r) / b_norm;
        it += 1;
    }
    Ok(CgSolution {
        x,
        iterations: it,
        residual,
    })
}

/// Solve an SPD system by conjugate gradients from a zero initial guess.
pub fn solve_sparse_spd(sys: &SparseSymmetricSystem) -> Result<Vec<f64>> {
    conjugate_gradient(&sys.matrix, &sys.rhs, None, sys.tol, sys.max_iter).map(|s| s.x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Gaussian elimination with partial pivoting on a dense copy.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
            x[row] = (b[row] - s) / a[row][row];
        }
        x
    }

    fn random_tridiagonal(rng: &mut ChaCha8Rng, n: usize) -> TridiagonalSystem {
        let sub: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sup: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let diag = (0..n).map(|_| 2.5 + rng.gen_range(0.0..1.0)).collect();
        let rhs = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        TridiagonalSystem { sub, diag, sup, rhs }
    }

    #[test]
    fn identity_tridiagonal() {
        let rhs = vec![1.0, -2.0, 3.5];
        let sys = TridiagonalSystem {
            sub: vec![0.0; 2],
            diag: vec![1.0; 3],
            sup: vec![0.0; 2],
            rhs: rhs.clone(),
        };
        assert_eq!(solve_tridiagonal(&sys).unwrap(), rhs);
    }

    #[test]
    fn two_by_two() {
        let sys = TridiagonalSystem {
            sub: vec![1.0],
            diag: vec![2.0, 2.0],
            sup: vec![1.0],
            rhs: vec![3.0, 3.0],
        };
        let x = solve_tridiagonal(&sys).unwrap();
        assert!(max_diff(&x, &[1.0, 1.0]) < 1e-15);
    }

    #[test]
    fn random_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let sys = random_tridiagonal(&mut rng, 50);
            let x = solve_tridiagonal(&sys).unwrap();
            let scale = 1.0 + sys.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max_diff(&sys.apply(&x), &sys.rhs) <= 1e-12 * scale);
        }
    }

    #[test]
    fn zero_pivot_is_singular() {
        let sys = TridiagonalSystem {
            sub: vec![1.0],
            diag: vec![1.0, 1.0],
            sup: vec![1.0],
            rhs: vec![1.0, 1.0],
        };
        assert_eq!(solve_tridiagonal(&sys), Err(Error::SingularSystem { row: 1 }));
    }

    #[test]
    fn lanes_match_single_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = random_tridiagonal(&mut rng, 9);
        let f = TridiagonalFactor::new(&sys.sub, &sys.diag, &sys.sup).unwrap();
        let width = 4;
        let cols: Vec<Vec<f64>> = (0..width)
            .map(|_| (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut data = vec![0.0; 9 * width];
        for (c, col) in cols.iter().enumerate() {
            for (k, v) in col.iter().enumerate() {
                data[k * width + c] = *v;
            }
        }
        f.solve_lanes_in_place(&mut data, width);
        for (c, col) in cols.iter().enumerate() {
            let mut x = col.clone();
            f.solve_in_place(&mut x);
            for k in 0..9 {
                assert_eq!(data[k * width + c], x[k]);
            }
        }
    }

    #[test]
    fn cyclic_identity() {
        let rhs = vec![4.0, 5.0, 6.0, 7.0];
        let sys = CyclicTridiagonalSystem {
            sub: vec![0.0; 3],
            diag: vec![1.0; 4],
            sup: vec![0.0; 3],
            top_right: 0.0,
            bottom_left: 0.0,
            rhs: rhs.clone(),
        };
        assert_eq!(solve_cyclic_tridiagonal(&sys).unwrap(), rhs);
    }

    #[test]
    fn cyclic_row_sums_one() {
        let sys = CyclicTridiagonalSystem {
            sub: vec![-1.0; 2],
            diag: vec![3.0; 3],
            sup: vec![-1.0; 2],
            top_right: -1.0,
            bottom_left: -1.0,
            rhs: vec![1.0; 3],
        };
        let x = solve_cyclic_tridiagonal(&sys).unwrap();
        assert!(max_diff(&x, &[1.0; 3]) < 1e-14);
    }

    #[test]
    fn cyclic_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = 10;
            let base = random_tridiagonal(&mut rng, n);
            let sys = CyclicTridiagonalSystem {
                sub: base.sub,
                diag: base.diag,
                sup: base.sup,
                top_right: rng.gen_range(-1.0..1.0),
                bottom_left: rng.gen_range(-1.0..1.0),
                rhs: base.rhs,
            };
            let mut dense = vec![vec![0.0; n]; n];
            for k in 0..n {
                dense[k][k] = sys.diag[k];
                if k + 1 < n {
                    dense[k][k + 1] = sys.sup[k];
                    dense[k + 1][k] = sys.sub[k];
                }
            }
            dense[0][n - 1] = sys.top_right;
            dense[n - 1][0] = sys.bottom_left;
            let want = dense_solve(dense, sys.rhs.clone());
            let got = solve_cyclic_tridiagonal(&sys).unwrap();
            assert!(max_diff(&got, &want) < 1e-10);
        }
    }

    #[test]
    fn cyclic_small_sizes() {
        // n = 2: both couplings land on the single off-diagonal pair.
        let sys = CyclicTridiagonalSystem {
            sub: vec![-1.0],
            diag: vec![3.0, 3.0],
            sup: vec![-1.0],
            top_right: -1.0,
            bottom_left: -1.0,
            rhs: vec![1.0, 1.0],
        };
        let x = solve_cyclic_tridiagonal(&sys).unwrap();
        assert!(max_diff(&x, &[1.0, 1.0]) < 1e-15);
        assert!(max_diff(&sys.apply(&x), &sys.rhs) < 1e-15);
        let one = CyclicTridiagonalSystem {
            sub: vec![],
            diag: vec![3.0],
            sup: vec![],
            top_right: -1.0,
            bottom_left: -1.0,
            rhs: vec![2.0],
        };
        assert_eq!(solve_cyclic_tridiagonal(&one).unwrap(), vec![2.0]);
    }

    #[test]
    fn cyclic_zero_corners_is_tridiagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = random_tridiagonal(&mut rng, 12);
        let cyc = CyclicTridiagonalSystem {
            sub: base.sub.clone(),
            diag: base.diag.clone(),
            sup: base.sup.clone(),
            top_right: 0.0,
            bottom_left: 0.0,
            rhs: base.rhs.clone(),
        };
        assert_eq!(
            solve_cyclic_tridiagonal(&cyc).unwrap(),
            solve_tridiagonal(&base).unwrap()
        );
    }

    fn shifted_laplacian(n: usize) -> CsrMatrix {
        // I + L with L the Neumann graph Laplacian.
        let mut t = Vec::new();
        for k in 0..n {
            let deg = (k > 0) as usize + (k + 1 < n) as usize;
            t.push((k, k, 1.0 + deg as f64));
            if k + 1 < n {
                t.push((k, k + 1, -1.0));
                t.push((k + 1, k, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t).unwrap()
    }

    #[test]
    fn cg_identity() {
        let a = CsrMatrix::from_triplets(3, (0..3).map(|k| (k, k, 1.0)).collect()).unwrap();
        let sys = SparseSymmetricSystem::new(a, vec![1.0, 2.0, 3.0]).unwrap();
        let x = solve_sparse_spd(&sys).unwrap();
        assert!(max_diff(&x, &[1.0, 2.0, 3.0]) < 1e-14);
    }

    #[test]
    fn cg_recovers_known_solution() {
        let n = 40;
        let a = shifted_laplacian(n);
        let x_true: Vec<f64> = (0..n).map(|k| (k as f64 * 0.3).sin() + 2.0).collect();
        let b = a.mul(&x_true);
        let x = solve_sparse_spd(&SparseSymmetricSystem::new(a, b).unwrap()).unwrap();
        assert!(max_diff(&x, &x_true) < 1e-9);
    }

    #[test]
    fn cg_agrees_with_thomas() {
        let n = 25;
        let a = shifted_laplacian(n);
        let rhs: Vec<f64> = (0..n).map(|k| (k as f64).cos()).collect();
        let sys = TridiagonalSystem {
            sub: (0..n - 1).map(|k| a.get(k + 1, k)).collect(),
            diag: a.diagonal(),
            sup: (0..n - 1).map(|k| a.get(k, k + 1)).collect(),
            rhs: rhs.clone(),
        };
        let direct = solve_tridiagonal(&sys).unwrap();
        let iterative = solve_sparse_spd(&SparseSymmetricSystem::new(a, rhs).unwrap()).unwrap();
        assert!(max_diff(&direct, &iterative) < 1e-9);
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = shifted_laplacian(200);
        let b = vec![1.0; 200];
        let mut sys = SparseSymmetricSystem::new(a, b).unwrap();
        sys.max_iter = 2;
        sys.tol = 1e-14;
        match solve_sparse_spd(&sys) {
            Err(Error::NonConvergence { iterations, residual, .. }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-14);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_asymmetric_or_nonpositive() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 0.5), (1, 1, 1.0)]).unwrap();
        assert!(SparseSymmetricSystem::new(a, vec![0.0; 2]).is_err());
        let b = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 1, 0.0)]).unwrap();
        assert!(SparseSymmetricSystem::new(b, vec![0.0; 2]).is_err());
    }
}
