//! Sparse storage, factorization, and weighted norms.
//!
//! The solver assembles all operators into [`SparseMatrix`] (compressed row
//! storage built from triplets).  Linear systems are solved through
//! [`factorize`], which wraps a sparse LU with partial pivoting; a
//! factorization is computed once per matrix and reused for many right-hand
//! sides.  [`solve_dense`] is an independent dense Gaussian elimination used
//! by the verification suite to cross-check the sparse path.

use std::ops::Range;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};

/// Errors from sparse construction and linear solves.
#[derive(Debug, thiserror::Error)]
pub enum LinalgError {
    #[error("triplet index ({row}, {col}) outside {nrows} x {ncols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("dimension mismatch: matrix is {nrows} x {ncols}, operand has length {len}")]
    DimensionMismatch {
        nrows: usize,
        ncols: usize,
        len: usize,
    },
    #[error("matrices {a_rows} x {a_cols} and {b_rows} x {b_cols} cannot be combined")]
    ShapeMismatch {
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },
    #[error("factorization failed: matrix is singular (zero pivot)")]
    Singular,
    #[error("factorization requires a square matrix, got {nrows} x {ncols}")]
    NotSquare { nrows: usize, ncols: usize },
}

/// Sparse matrix in compressed row storage with sorted, unique column
/// indices per row.  Construction from triplets sums duplicates in a
/// deterministic order, so equal inputs yield byte-identical storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicate entries
    /// are summed.  Explicitly stored zeros are kept (they participate in
    /// the sparsity pattern but not in factorizations).
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(LinalgError::IndexOutOfBounds {
                    row: r,
                    col: c,
                    nrows,
                    ncols,
                });
            }
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        // The value participates in the sort key so duplicate entries are
        // accumulated in a canonical order: the assembled matrix is bitwise
        // independent of the triplet order handed in.
        order.sort_unstable_by(|&i, &j| {
            (triplets[i].0, triplets[i].1)
                .cmp(&(triplets[j].0, triplets[j].1))
                .then(triplets[i].2.total_cmp(&triplets[j].2))
        });

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &i in &order {
            let (r, c, v) = triplets[i];
            if last == Some((r, c)) {
                *vals.last_mut().expect("entry exists when last is set") += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            vals,
        })
    }

    /// Identity-scaled diagonal matrix `diag(d)`.
    pub fn from_diag(d: &[f64]) -> Self {
        let triplets: Vec<(usize, usize, f64)> =
            d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), d.len(), &triplets).expect("diagonal indices are in range")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Number of stored entries (including explicit zeros).
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Stored value at `(i, j)`, or 0 if the entry is not part of the
    /// sparsity pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.vals[lo + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.ncols {
            return Err(LinalgError::DimensionMismatch {
                nrows: self.nrows,
                ncols: self.ncols,
                len: x.len(),
            });
        }
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
        Ok(y)
    }

    /// `y = A^T x`.
    pub fn transpose_matvec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.nrows {
            return Err(LinalgError::DimensionMismatch {
                nrows: self.ncols,
                ncols: self.nrows,
                len: x.len(),
            });
        }
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.vals[k] * x[r];
            }
        }
        Ok(y)
    }

    /// Extracts the sub-matrix with the given row and column index ranges.
    pub fn block(&self, rows: Range<usize>, cols: Range<usize>) -> SparseMatrix {
        assert!(rows.end <= self.nrows && cols.end <= self.ncols);
        let nrows = rows.end - rows.start;
        let ncols = cols.end - cols.start;
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        for (out_r, r) in rows.clone().enumerate() {
            let lo = self.row_ptr[r];
            let hi = self.row_ptr[r + 1];
            let start = lo + self.col_idx[lo..hi].partition_point(|&c| c < cols.start);
            let end = lo + self.col_idx[lo..hi].partition_point(|&c| c < cols.end);
            for k in start..end {
                col_idx.push(self.col_idx[k] - cols.start);
                vals.push(self.vals[k]);
            }
            row_ptr[out_r + 1] = col_idx.len();
        }
        SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// `alpha * self + beta * other`, merging sparsity patterns.
    pub fn add_scaled(
        &self,
        alpha: f64,
        other: &SparseMatrix,
        beta: f64,
    ) -> Result<SparseMatrix, LinalgError> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(LinalgError::ShapeMismatch {
                a_rows: self.nrows,
                a_cols: self.ncols,
                b_rows: other.nrows,
                b_cols: other.ncols,
            });
        }
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.nnz() + other.nnz());
        let mut vals = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.nrows {
            let (mut i, ai) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let (mut j, bj) = (other.row_ptr[r], other.row_ptr[r + 1]);
            while i < ai || j < bj {
                let ca = if i < ai { self.col_idx[i] } else { usize::MAX };
                let cb = if j < bj { other.col_idx[j] } else { usize::MAX };
                if ca < cb {
                    col_idx.push(ca);
                    vals.push(alpha * self.vals[i]);
                    i += 1;
                } else if cb < ca {
                    col_idx.push(cb);
                    vals.push(beta * other.vals[j]);
                    j += 1;
                } else {
                    col_idx.push(ca);
                    vals.push(alpha * self.vals[i] + beta * other.vals[j]);
                    i += 1;
                    j += 1;
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            vals,
        })
    }

    /// `self * diag(d)`: scales column `j` by `d[j]`.
    pub fn scale_cols(&self, d: &[f64]) -> SparseMatrix {
        assert_eq!(d.len(), self.ncols);
        let mut out = self.clone();
        for k in 0..out.vals.len() {
            out.vals[k] *= d[out.col_idx[k]];
        }
        out
    }

    /// `alpha * self`.
    pub fn scaled(&self, alpha: f64) -> SparseMatrix {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= alpha;
        }
        out
    }

    /// Dense copy, row-major; intended for small verification problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.ncols]; self.nrows];
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                a[r][self.col_idx[k]] += self.vals[k];
            }
        }
        a
    }

    /// Iterates stored entries as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.vals[k]))
        })
    }
}

/// LU factorization with partial pivoting of a square [`SparseMatrix`],
/// reusable across many right-hand sides.
pub struct Factorization {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

/// Factorizes a square sparse matrix.  Explicitly stored zeros are dropped
/// before factorization, so an all-zero row or column reports
/// [`LinalgError::Singular`]; an exact zero pivot arising during elimination
/// reports the same error.
pub fn factorize(a: &SparseMatrix) -> Result<Factorization, LinalgError> {
    if a.nrows != a.ncols {
        return Err(LinalgError::NotSquare {
            nrows: a.nrows,
            ncols: a.ncols,
        });
    }
    let triplets: Vec<Triplet<usize, usize, f64>> = a
        .iter()
        .filter(|&(_, _, v)| v != 0.0)
        .map(|(r, c, v)| Triplet::new(r, c, v))
        .collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &triplets)
        .map_err(|_| LinalgError::Singular)?;
    // The backend signals structural singularity through an error but raises
    // a panic on an exact numeric zero pivot; map both to `Singular`.
    let lu = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| mat.sp_lu()))
        .map_err(|_| LinalgError::Singular)?
        .map_err(|_| LinalgError::Singular)?;
    Ok(Factorization { n: a.nrows, lu })
}

impl Factorization {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` using the stored factorization.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::DimensionMismatch {
                nrows: self.n,
                ncols: self.n,
                len: b.len(),
            });
        }
        let rhs = faer::Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        Ok((0..self.n).map(|i| x[(i, 0)]).collect())
    }
}

/// `sqrt(x^T M x)` for a symmetric positive semi-definite `M`; tiny negative
/// round-off is clamped to zero.
pub fn weighted_norm(m: &SparseMatrix, x: &[f64]) -> Result<f64, LinalgError> {
    Ok(weighted_inner(m, x, x)?.max(0.0).sqrt())
}

/// `x^T M y`.
pub fn weighted_inner(m: &SparseMatrix, x: &[f64], y: &[f64]) -> Result<f64, LinalgError> {
    let my = m.matvec(y)?;
    if x.len() != my.len() {
        return Err(LinalgError::DimensionMismatch {
            nrows: m.nrows,
            ncols: m.ncols,
            len: x.len(),
        });
    }
    Ok(dot(x, &my))
}

/// Euclidean inner product.
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Euclidean norm.
pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `x + alpha * y`, elementwise.
pub fn axpy(x: &[f64], alpha: f64, y: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a + alpha * b).collect()
}

/// Linear combination `sum_k coeffs[k] * vecs[k]`.
pub fn lincomb(coeffs: &[f64], vecs: &[&[f64]]) -> Vec<f64> {
    assert_eq!(coeffs.len(), vecs.len());
    assert!(!vecs.is_empty());
    let n = vecs[0].len();
    let mut out = vec![0.0; n];
    for (&c, v) in coeffs.iter().zip(vecs) {
        assert_eq!(v.len(), n);
        for i in 0..n {
            out[i] += c * v[i];
        }
    }
    out
}

/// Solves a dense system by Gaussian elimination with partial pivoting.
/// Independent of the sparse backend; used as a verification oracle.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.len();
    if b.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(LinalgError::DimensionMismatch {
            nrows: n,
            ncols: n,
            len: b.len(),
        });
    }
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x: Vec<f64> = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("non-empty pivot range");
        if m[piv][col] == 0.0 {
            return Err(LinalgError::Singular);
        }
        m.swap(col, piv);
        x.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for c in col + 1..n {
            acc -= m[col][c] * x[c];
        }
        x[col] = acc / m[col][col];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(rng: &mut ChaCha8Rng, n: usize, fill: f64) -> SparseMatrix {
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, rng.random_range(1.0..4.0)));
            for j in 0..n {
                if i != j && rng.random::<f64>() < fill {
                    triplets.push((i, j, rng.random_range(-1.0..1.0)));
                }
            }
        }
        SparseMatrix::from_triplets(n, n, &triplets).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> SparseMatrix {
        // A^T A + I as a dense-ish SPD matrix assembled from triplets.
        let a: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for k in 0..n {
                    v += a[k][i] * a[k][j];
                }
                if i == j {
                    v += 1.0;
                }
                triplets.push((i, j, v));
            }
        }
        SparseMatrix::from_triplets(n, n, &triplets).unwrap()
    }

    #[test]
    fn matvec_matches_dense_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = rng.random_range(1..12);
            let a = random_sparse(&mut rng, n, 0.4);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = a.matvec(&x).unwrap();
            let d = a.to_dense();
            for i in 0..n {
                let want: f64 = (0..n).map(|j| d[i][j] * x[j]).sum();
                assert_relative_eq!(y[i], want, epsilon = 1e-13, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.5), (1, 0, -1.0)])
            .unwrap();
        assert_eq!(a.get(0, 0), 3.5);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn out_of_bounds_triplet_is_rejected() {
        let err = SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, LinalgError::IndexOutOfBounds { row: 2, .. }));
    }

    #[test]
    fn construction_is_deterministic() {
        let t = [(1usize, 1usize, 2.0), (0, 1, 1.0), (1, 1, 0.5), (0, 0, 3.0)];
        let a = SparseMatrix::from_triplets(2, 2, &t).unwrap();
        let b = SparseMatrix::from_triplets(2, 2, &t).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn transpose_matvec_matches_transposed_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_sparse(&mut rng, 7, 0.3);
        let x: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = a.transpose_matvec(&x).unwrap();
        let d = a.to_dense();
        for j in 0..7 {
            let want: f64 = (0..7).map(|i| d[i][j] * x[i]).sum();
            assert_relative_eq!(y[j], want, epsilon = 1e-13, max_relative = 1e-13);
        }
    }

    #[test]
    fn block_rows_reproduce_full_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 9;
        let a = random_sparse(&mut rng, n, 0.5);
        let split = 4;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = a.matvec(&x).unwrap();

        let a11 = a.block(0..split, 0..split);
        let a12 = a.block(0..split, split..n);
        let a21 = a.block(split..n, 0..split);
        let a22 = a.block(split..n, split..n);
        let (x1, x2) = x.split_at(split);
        let top = axpy(&a11.matvec(x1).unwrap(), 1.0, &a12.matvec(x2).unwrap());
        let bot = axpy(&a21.matvec(x1).unwrap(), 1.0, &a22.matvec(x2).unwrap());
        for i in 0..split {
            assert_relative_eq!(y[i], top[i], epsilon = 1e-13, max_relative = 1e-13);
        }
        for i in split..n {
            assert_relative_eq!(y[i], bot[i - split], epsilon = 1e-13, max_relative = 1e-13);
        }
    }

    #[test]
    fn add_scaled_matches_dense_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_sparse(&mut rng, 6, 0.3);
        let b = random_sparse(&mut rng, 6, 0.3);
        let c = a.add_scaled(2.0, &b, -0.5).unwrap();
        let (da, db, dc) = (a.to_dense(), b.to_dense(), c.to_dense());
        for i in 0..6 {
            for j in 0..6 {
                assert_relative_eq!(
                    dc[i][j],
                    2.0 * da[i][j] - 0.5 * db[i][j],
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn factor_solve_has_small_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let n = rng.random_range(2..40);
            let a = random_sparse(&mut rng, n, 0.2);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = factorize(&a).unwrap();
            let x = f.solve(&b).unwrap();
            let r = axpy(&b, -1.0, &a.matvec(&x).unwrap());
            assert!(norm2(&r) <= 1e-10 * (1.0 + norm2(&b)), "residual {}", norm2(&r));
        }
    }

    #[test]
    fn sparse_solve_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 15;
        let a = random_sparse(&mut rng, n, 0.3);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x_sparse = factorize(&a).unwrap().solve(&b).unwrap();
        let x_dense = solve_dense(&a.to_dense(), &b).unwrap();
        for i in 0..n {
            assert_relative_eq!(x_sparse[i], x_dense[i], epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn zero_matrix_factorization_errors() {
        let a = SparseMatrix::from_triplets(3, 3, &[(0, 0, 0.0), (1, 1, 0.0), (2, 2, 0.0)])
            .unwrap();
        assert!(matches!(factorize(&a), Err(LinalgError::Singular)));
    }

    #[test]
    fn numerically_singular_matrix_errors() {
        // Rank-one 2x2 matrix: elimination hits an exact zero pivot.
        let a = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
        )
        .unwrap();
        assert!(matches!(factorize(&a), Err(LinalgError::Singular)));
    }

    #[test]
    fn solve_dimension_mismatch_errors() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let f = factorize(&a).unwrap();
        assert!(matches!(
            f.solve(&[1.0, 2.0, 3.0]),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn saddle_point_system_solves() {
        // Indefinite system [[2, 1], [1, 0]]: requires pivoting.
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0)])
            .unwrap();
        let f = factorize(&a).unwrap();
        let x = f.solve(&[3.0, 1.0]).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn weighted_norm_is_homogeneous_and_subadditive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let n = rng.random_range(1..8);
            let m = random_spd(&mut rng, n);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s = rng.random_range(-5.0..5.0);
            let nx = weighted_norm(&m, &x).unwrap();
            let ny = weighted_norm(&m, &y).unwrap();
            let sx: Vec<f64> = x.iter().map(|v| s * v).collect();
            assert_relative_eq!(
                weighted_norm(&m, &sx).unwrap(),
                s.abs() * nx,
                epsilon = 1e-12,
                max_relative = 1e-12
            );
            let xy = axpy(&x, 1.0, &y);
            assert!(weighted_norm(&m, &xy).unwrap() <= nx + ny + 1e-12);
        }
    }

    #[test]
    fn dense_oracle_detects_singularity() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(matches!(solve_dense(&a, &[1.0, 1.0]), Err(LinalgError::Singular)));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            /// matvec is linear: A(a x + b y) = a A x + b A y.
            #[test]
            fn matvec_linearity(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = rng.random_range(1..10);
                let m = random_sparse(&mut rng, n, 0.4);
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
                let lhs = m.matvec(&combo).unwrap();
                let mx = m.matvec(&x).unwrap();
                let my = m.matvec(&y).unwrap();
                for i in 0..n {
                    let rhs = a * mx[i] + b * my[i];
                    prop_assert!((lhs[i] - rhs).abs() <= 1e-11 * (1.0 + rhs.abs()));
                }
            }

            /// Triplet order never changes the assembled matrix.
            #[test]
            fn triplet_order_is_irrelevant(seed in 0u64..1000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = rng.random_range(1..8);
                let k = rng.random_range(0..30usize);
                let triplets: Vec<(usize, usize, f64)> = (0..k)
                    .map(|_| {
                        (
                            rng.random_range(0..n),
                            rng.random_range(0..n),
                            rng.random_range(-1.0..1.0),
                        )
                    })
                    .collect();
                let mut shuffled = triplets.clone();
                shuffled.reverse();
                let a = SparseMatrix::from_triplets(n, n, &triplets).unwrap();
                let b = SparseMatrix::from_triplets(n, n, &shuffled).unwrap();
                let (da, db) = (a.to_dense(), b.to_dense());
                for i in 0..n {
                    for j in 0..n {
                        // Duplicates are accumulated in a canonical order, so
                        // the result is bitwise identical.
                        prop_assert!(da[i][j].to_bits() == db[i][j].to_bits());
                    }
                }
            }
        }
    }
}
