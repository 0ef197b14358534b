//! Dense row-major matrices and the kernels the rest of the crate is built on.
//!
//! A [`DenseMatrix`] is immutable once built: every kernel returns a fresh
//! matrix. Constructors reject empty shapes and non-finite entries.

use std::fmt;

use crate::error::{DemandError, Result};

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for v in self.row(r).iter().take(8) {
                write!(f, "{v:>12.5e} ")?;
            }
            if self.cols > 8 {
                write!(f, "...")?;
            }
            writeln!(f)?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    /// Builds a matrix from row-major data.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(DemandError::Input(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(DemandError::Input(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DemandError::Input(format!(
                "non-finite entry {} at ({}, {})",
                data[pos],
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * m);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != m {
                return Err(DemandError::Input(format!(
                    "row {i} has {} entries, expected {m}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(n, m, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    /// # Panics
    /// Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    /// # Panics
    /// Panics if either dimension is zero or `value` is not finite.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        assert!(value.is_finite(), "fill value must be finite");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Internal constructor for kernels whose output is finite by construction.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert!(data.iter().all(|v| v.is_finite()), "kernel produced a non-finite entry");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false: empty matrices cannot be constructed.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major view of the entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Same entries, new shape. Row-major order is preserved.
    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.len() || rows == 0 || cols == 0 {
            return Err(DemandError::shape("reshape", self.shape(), (rows, cols)));
        }
        Ok(Self::from_raw(rows, cols, self.data.clone()))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(DemandError::Input("row selection is empty".into()));
        }
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            if i >= self.rows {
                return Err(DemandError::Input(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self::from_raw(idx.len(), self.cols, data))
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self::from_raw(self.cols, self.rows, data)
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(DemandError::shape("matmul", self.shape(), other.shape()));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * m..(p + 1) * m];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_raw(n, m, out))
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.rows != other.rows {
            return Err(DemandError::shape("t_matmul", self.shape(), other.shape()));
        }
        let (k, n, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for p in 0..k {
            let arow = self.row(p);
            let brow = other.row(p);
            for (i, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out[i * m..(i + 1) * m];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_raw(n, m, out))
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.cols {
            return Err(DemandError::shape("matmul_t", self.shape(), other.shape()));
        }
        let (n, m) = (self.rows, other.rows);
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let a = self.row(i);
            for j in 0..m {
                out.push(a.iter().zip(other.row(j)).map(|(x, y)| x * y).sum());
            }
        }
        Ok(Self::from_raw(n, m, out))
    }

    fn zip_with(&self, other: &DenseMatrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(DemandError::shape(op, self.shape(), other.shape()));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_raw(self.rows, self.cols, data))
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &DenseMatrix) -> Result<Self> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// Largest absolute entry; 0 for the zero matrix.
    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

/// Column-pivoted QR factorization `m · P = q · r`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// `rows × k` with orthonormal columns, `k = min(rows, cols)`.
    pub q: DenseMatrix,
    /// `k × cols`, upper triangular (trapezoidal when wide).
    pub r: DenseMatrix,
    /// Column `j` of `q · r` is column `perm[j]` of the input.
    pub perm: Vec<usize>,
}

impl PivotedQr {
    /// Magnitudes of the diagonal of `r`, non-increasing.
    pub fn diag_abs(&self) -> Vec<f64> {
        let k = self.r.rows().min(self.r.cols());
        (0..k).map(|i| self.r.get(i, i).abs()).collect()
    }
}

/// Householder QR with column pivoting (Businger–Golub).
///
/// At every step the trailing column of largest remaining norm is moved into
/// place, so `|r₁₁| ≥ |r₂₂| ≥ …`. Trailing norms are recomputed rather than
/// downdated; the sizes this crate works with make that affordable and it
/// keeps the pivot order exact for numerically rank-deficient inputs.
pub fn qr_pivoted(m: &DenseMatrix) -> PivotedQr {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    let mut a = m.as_slice().to_vec();
    let mut perm: Vec<usize> = (0..cols).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);

    for j in 0..k {
        // pivot
        let mut best = j;
        let mut best_norm = -1.0;
        for c in j..cols {
            let n: f64 = (j..rows).map(|r| a[r * cols + c] * a[r * cols + c]).sum();
            if n > best_norm {
                best_norm = n;
                best = c;
            }
        }
        if best != j {
            for r in 0..rows {
                a.swap(r * cols + j, r * cols + best);
            }
            perm.swap(j, best);
        }

        let norm = best_norm.sqrt();
        let mut v: Vec<f64> = (j..rows).map(|r| a[r * cols + j]).collect();
        if norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
        if vnorm_sq == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let tau = 2.0 / vnorm_sq;
        for c in j..cols {
            let dot: f64 = v.iter().enumerate().map(|(i, vi)| vi * a[(j + i) * cols + c]).sum();
            let s = tau * dot;
            for (i, vi) in v.iter().enumerate() {
                a[(j + i) * cols + c] -= s * vi;
            }
        }
        a[j * cols + j] = alpha;
        for r in (j + 1)..rows {
            a[r * cols + j] = 0.0;
        }
        reflectors.push(v);
    }

    let mut r_data = vec![0.0; k * cols];
    for i in 0..k {
        for c in i..cols {
            r_data[i * cols + c] = a[i * cols + c];
        }
    }

    // Q = H_0 · H_1 ⋯ H_{k-1} applied to the first k columns of the identity.
    let mut q = vec![0.0; rows * k];
    for i in 0..k {
        q[i * k + i] = 1.0;
    }
    for (j, v) in reflectors.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        let tau = 2.0 / v.iter().map(|x| x * x).sum::<f64>();
        for c in 0..k {
            let dot: f64 = v.iter().enumerate().map(|(i, vi)| vi * q[(j + i) * k + c]).sum();
            let s = tau * dot;
            for (i, vi) in v.iter().enumerate() {
                q[(j + i) * k + c] -= s * vi;
            }
        }
    }

    PivotedQr {
        q: DenseMatrix::from_raw(rows, k, q),
        r: DenseMatrix::from_raw(k, cols, r_data),
        perm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn permuted_columns(m: &DenseMatrix, perm: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(m.rows(), perm.len(), |i, j| m.get(i, perm[j])).unwrap()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::new(0, 2, vec![]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::new(1, 1, vec![f64::INFINITY]).is_err());
        assert!(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random(&mut rng, 3, 5);
        assert_eq!(DenseMatrix::identity(3).matmul(&m).unwrap(), m);

        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[2.0, 4.0]);
        assert_eq!(c.shape(), (2, 1));
    }

    #[test]
    fn matmul_shape_error_names_both_operands() {
        let a = DenseMatrix::zeros(2, 3);
        let err = a.matmul(&DenseMatrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn transposed_products_match_explicit_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&mut rng, 4, 3);
        let b = random(&mut rng, 4, 5);
        let c = random(&mut rng, 6, 3);
        let lhs = a.t_matmul(&b).unwrap();
        let rhs = a.transpose().matmul(&b).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs_entry() < 1e-14);
        let lhs = a.matmul_t(&c).unwrap();
        let rhs = a.matmul(&c.transpose()).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs_entry() < 1e-14);
    }

    #[test]
    fn norms() {
        let z = DenseMatrix::zeros(2, 2);
        assert_eq!(z.frobenius_norm(), 0.0);
        assert_eq!(z.l1_norm(), 0.0);
        assert_eq!(z.max_abs_entry(), 0.0);

        let m = DenseMatrix::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_eq!(m.frobenius_norm(), 5.0);
        assert_eq!(m.l1_norm(), 7.0);
        assert_eq!(m.max_abs_entry(), 4.0);

        let m = DenseMatrix::from_rows(&[[-6.0, 1.0]]).unwrap();
        assert_eq!(m.max_abs_entry(), 6.0);
    }

    #[test]
    fn qr_identity() {
        let qr = qr_pivoted(&DenseMatrix::identity(3));
        for d in qr.diag_abs() {
            assert!((d - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn qr_rank_one_has_vanishing_second_pivot() {
        let u = [1.0, 2.0, 3.0];
        let m = DenseMatrix::from_fn(3, 2, |i, _| u[i]).unwrap();
        let d = qr_pivoted(&m).diag_abs();
        assert!((d[0] - 14f64.sqrt()).abs() < 1e-12);
        assert!(d[1] <= 1e-10, "{d:?}");

        // singular-value oracle agrees the matrix is rank one
        let na = nalgebra::DMatrix::from_row_slice(3, 2, m.as_slice());
        let sv = na.singular_values();
        assert!(sv.min() <= 1e-10);
    }

    #[test]
    fn qr_random_square_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random(&mut rng, 4, 4);
        let qr = qr_pivoted(&m);
        let gram = qr.q.t_matmul(&qr.q).unwrap();
        let err = gram.sub(&DenseMatrix::identity(4)).unwrap().frobenius_norm();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn qr_zero_matrix_is_valid() {
        let qr = qr_pivoted(&DenseMatrix::zeros(3, 4));
        assert!(qr.diag_abs().iter().all(|&d| d == 0.0));
        assert_eq!(qr.q.shape(), (3, 3));
    }

    #[test]
    fn qr_reconstructs_mixed_shapes_with_sorted_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for case in 0..100 {
            let r = rng.random_range(1..12);
            let c = rng.random_range(1..12);
            let m = random(&mut rng, r, c);
            let qr = qr_pivoted(&m);
            let mp = permuted_columns(&m, &qr.perm);
            let recon = qr.q.matmul(&qr.r).unwrap();
            let rel = recon.sub(&mp).unwrap().frobenius_norm() / m.frobenius_norm();
            assert!(rel <= 1e-10, "case {case}: {rel}");
            let d = qr.diag_abs();
            assert!(d.windows(2).all(|w| w[0] >= w[1]), "case {case}: {d:?}");
            for i in 0..qr.r.rows() {
                for j in 0..i.min(qr.r.cols()) {
                    assert_eq!(qr.r.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn matmul_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (a, b, c, d) = (
                rng.random_range(1..8),
                rng.random_range(1..8),
                rng.random_range(1..8),
                rng.random_range(1..8),
            );
            let x = random(&mut rng, a, b);
            let y = random(&mut rng, b, c);
            let z = random(&mut rng, c, d);
            let lhs = x.matmul(&y).unwrap().matmul(&z).unwrap();
            let rhs = x.matmul(&y.matmul(&z).unwrap()).unwrap();
            let scale = lhs.frobenius_norm().max(1e-300);
            assert!(lhs.sub(&rhs).unwrap().frobenius_norm() / scale <= 1e-9);
        }
    }
}
