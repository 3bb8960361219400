//! Dense matrices, SVD, column-stacking vectorization and sparse observation sets.
//!
//! `DenseMatrix` is a thin wrapper over a column-major `nalgebra::DMatrix<f64>`.
//! Everything downstream (completion, rotation, detectors) goes through the
//! accessors here so the storage order stays an implementation detail.

use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    inner: DMatrix<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            inner: DMatrix::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            inner: DMatrix::from_fn(rows, cols, f),
        }
    }

    pub fn from_diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} entries for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("matrix entries must be finite".into()));
        }
        Ok(Self {
            inner: DMatrix::from_row_slice(rows, cols, data),
        })
    }

    pub fn from_nalgebra(inner: DMatrix<f64>) -> Self {
        Self { inner }
    }

    pub fn as_nalgebra(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_nalgebra(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.inner[(row, col)] = value;
    }

    pub fn row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.inner.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self {
            inner: self.inner.transpose(),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            inner: &self.inner * k,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "cannot add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Self {
            inner: &self.inner + &other.inner,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "cannot subtract {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Self {
            inner: &self.inner - &other.inner,
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols() != other.rows() {
            return Err(Error::Dimension(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Self {
            inner: &self.inner * &other.inner,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Full singular value decomposition `U diag(s) V^T` with nonincreasing `s`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub singular_values: Vec<f64>,
    /// `rows x k` orthonormal columns, `k = min(rows, cols)`.
    pub left: DMatrix<f64>,
    /// `cols x k` orthonormal columns.
    pub right: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn rank_capacity(&self) -> usize {
        self.singular_values.len()
    }

    pub fn rows(&self) -> usize {
        self.left.nrows()
    }

    pub fn cols(&self) -> usize {
        self.right.nrows()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let k = self.rank_capacity();
        truncate_impl(self, k)
    }
}

const SVD_MAX_ITERS: usize = 20_000;

/// Full SVD. Singular values are sorted in nonincreasing order and each left
/// vector is sign-normalized so its largest-magnitude entry is positive.
pub fn svd(m: &DenseMatrix) -> Result<SpectralDecomposition> {
    if !m.is_finite() {
        return Err(Error::Input("svd input contains non-finite entries".into()));
    }
    let k = m.rows().min(m.cols());
    if k == 0 {
        return Err(Error::Dimension("svd of an empty matrix".into()));
    }
    let raw = nalgebra::SVD::try_new(m.inner.clone(), true, true, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
    let u = raw.u.expect("left vectors requested");
    let v_t = raw.v_t.expect("right vectors requested");
    let s = raw.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let mut left = DMatrix::zeros(m.rows(), k);
    let mut right = DMatrix::zeros(m.cols(), k);
    let mut values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        values.push(s[src].max(0.0));
        let mut ucol = u.column(src).clone_owned();
        let mut vcol = v_t.row(src).transpose();
        let mut pivot = 0;
        for i in 1..ucol.len() {
            if ucol[i].abs() > ucol[pivot].abs() {
                pivot = i;
            }
        }
        if ucol[pivot] < 0.0 {
            ucol.neg_mut();
            vcol.neg_mut();
        }
        left.set_column(dst, &ucol);
        right.set_column(dst, &vcol);
    }
    Ok(SpectralDecomposition {
        singular_values: values,
        left,
        right,
    })
}

/// Singular values only, nonincreasing.
pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    if !m.is_finite() {
        return Err(Error::Input("svd input contains non-finite entries".into()));
    }
    let raw = nalgebra::SVD::try_new(m.inner.clone(), false, false, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
    let mut s: Vec<f64> = raw.singular_values.iter().map(|v| v.max(0.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Column-stacking vectorization.
pub fn vec(m: &DenseMatrix) -> Vec<f64> {
    m.inner.as_slice().to_vec()
}

/// Inverse of [`vec`].
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Result<DenseMatrix> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "vector of length {} cannot fill {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DenseMatrix {
        inner: DMatrix::from_column_slice(rows, cols, v),
    })
}

/// Best rank-`r` approximation `sum_{i<=r} s_i u_i v_i^T`.
pub fn truncate_rank(d: &SpectralDecomposition, r: usize) -> Result<DenseMatrix> {
    if r == 0 || r > d.rank_capacity() {
        return Err(Error::Dimension(format!(
            "rank {r} outside 1..={}",
            d.rank_capacity()
        )));
    }
    Ok(truncate_impl(d, r))
}

fn truncate_impl(d: &SpectralDecomposition, r: usize) -> DenseMatrix {
    let u = d.left.columns(0, r);
    let mut v = d.right.columns(0, r).clone_owned();
    for (k, mut col) in v.column_iter_mut().enumerate() {
        col *= d.singular_values[k];
    }
    DenseMatrix {
        inner: u * v.transpose(),
    }
}

/// One observed entry of the field matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Partially observed matrix: the observed index set together with the values
/// on it. Unobserved entries carry no value at all; zero-filling is explicit.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    rows: usize,
    cols: usize,
    samples: Vec<Sample>,
}

impl ObservationSet {
    pub fn new(rows: usize, cols: usize, samples: Vec<Sample>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("grid dimensions must be positive".into()));
        }
        let mut seen = vec![false; rows * cols];
        for s in &samples {
            if s.row >= rows || s.col >= cols {
                return Err(Error::IndexOutOfRange {
                    row: s.row,
                    col: s.col,
                    rows,
                    cols,
                });
            }
            if !s.value.is_finite() {
                return Err(Error::Input(format!(
                    "non-finite value at ({}, {})",
                    s.row, s.col
                )));
            }
            let idx = s.row + s.col * rows;
            if seen[idx] {
                return Err(Error::DuplicateIndex {
                    row: s.row,
                    col: s.col,
                });
            }
            seen[idx] = true;
        }
        Ok(Self {
            rows,
            cols,
            samples,
        })
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            samples: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }

    pub fn indices(&self) -> Vec<(usize, usize)> {
        self.samples.iter().map(|s| (s.row, s.col)).collect()
    }

    /// Restricts to the samples at the given positions of `samples()`.
    pub fn select(&self, positions: &[usize]) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            samples: positions.iter().map(|&p| self.samples[p]).collect(),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    value: s.value * k,
                    ..*s
                })
                .collect(),
        }
    }

    /// Dense matrix with unobserved entries set to zero.
    pub fn zero_filled(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for s in &self.samples {
            m.set(s.row, s.col, s.value);
        }
        m
    }

    /// Column-major boolean mask of observed cells.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.rows * self.cols];
        for s in &self.samples {
            mask[s.row + s.col * self.rows] = true;
        }
        mask
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.samples.iter().map(|s| s.value * s.value).sum()
    }
}

/// Samples `m` on the given index set.
pub fn mask_project(m: &DenseMatrix, omega: &[(usize, usize)]) -> Result<ObservationSet> {
    let mut seen = HashSet::with_capacity(omega.len());
    let mut samples = Vec::with_capacity(omega.len());
    for &(row, col) in omega {
        if row >= m.rows() || col >= m.cols() {
            return Err(Error::IndexOutOfRange {
                row,
                col,
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        if !seen.insert((row, col)) {
            return Err(Error::DuplicateIndex { row, col });
        }
        samples.push(Sample {
            row,
            col,
            value: m.get(row, col),
        });
    }
    ObservationSet::new(m.rows(), m.cols(), samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_matrix, random_orthonormal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_frob(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn identity_spectrum() {
        let d = svd(&DenseMatrix::identity(4)).unwrap();
        assert_eq!(d.singular_values.len(), 4);
        for s in d.singular_values {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rank_one_outer_product() {
        let u = [0.6, 0.8, 0.0];
        let v = [0.0, 1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
        let m = DenseMatrix::from_fn(3, 4, |i, j| u[i] * v[j]);
        let s = svd(&m).unwrap().singular_values;
        assert!((s[0] - 1.0).abs() < 1e-14);
        assert!(s[1..].iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn planted_spectrum_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20;
        let planted: Vec<f64> = (0..n).map(|k| 5.0 - 0.2 * k as f64).collect();
        let u = random_orthonormal(n, n, &mut rng);
        let v = random_orthonormal(n, n, &mut rng);
        let m = u
            .matmul(&DenseMatrix::from_diagonal(&planted))
            .unwrap()
            .matmul(&v.transpose())
            .unwrap();
        let d = svd(&m).unwrap();
        for (got, want) in d.singular_values.iter().zip(&planted) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn sign_convention_largest_entry_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = svd(&random_matrix(6, 4, &mut rng)).unwrap();
        for col in d.left.column_iter() {
            let pivot = col.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn wide_and_tall_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (r, c) in [(5, 9), (9, 5), (1, 7)] {
            let m = random_matrix(r, c, &mut rng);
            let d = svd(&m).unwrap();
            assert_eq!(d.rank_capacity(), r.min(c));
            assert!(rel_frob(&d.reconstruct(), &m) < 1e-12);
        }
    }

    #[test]
    fn svd_rejects_nan() {
        let mut m = DenseMatrix::zeros(2, 2);
        m.set(0, 0, f64::NAN);
        assert!(matches!(svd(&m), Err(Error::Input(_))));
    }

    #[test]
    fn vec_column_stacking() {
        let m = DenseMatrix::from_row_major(2, 2, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!(vec(&m), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unvec(&[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap(), m);
    }

    #[test]
    fn unvec_length_mismatch() {
        assert!(matches!(unvec(&[1.0; 5], 2, 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn truncate_diagonal() {
        let d = svd(&DenseMatrix::from_diagonal(&[3.0, 2.0, 1.0])).unwrap();
        let t = truncate_rank(&d, 1).unwrap();
        let want = DenseMatrix::from_diagonal(&[3.0, 0.0, 0.0]);
        assert!(t.sub(&want).unwrap().max_abs() < 1e-14);
        assert!(matches!(truncate_rank(&d, 0), Err(Error::Dimension(_))));
        assert!(matches!(truncate_rank(&d, 4), Err(Error::Dimension(_))));
    }

    #[test]
    fn truncate_full_rank_and_eckart_young() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_matrix(12, 9, &mut rng);
        let d = svd(&m).unwrap();
        assert!(rel_frob(&truncate_rank(&d, 9).unwrap(), &m) < 1e-8);
        for r in 1..9 {
            let err = m.sub(&truncate_rank(&d, r).unwrap()).unwrap().frobenius_norm();
            let tail: f64 = d.singular_values[r..].iter().map(|s| s * s).sum::<f64>().sqrt();
            assert!((err - tail).abs() < 1e-10 * tail.max(1.0));
        }
    }

    #[test]
    fn mask_project_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_matrix(10, 10, &mut rng);
        let all: Vec<_> = (0..10).flat_map(|i| (0..10).map(move |j| (i, j))).collect();
        assert_eq!(mask_project(&m, &all).unwrap().len(), 100);
        assert!(mask_project(&m, &[]).unwrap().is_empty());

        let half: Vec<_> = all.iter().copied().filter(|(i, j)| (i * 7 + j * 3) % 2 == 0).collect();
        let obs = mask_project(&m, &half).unwrap();
        assert_eq!(obs.len(), 50);
        for s in obs.iter() {
            assert!(half.contains(&(s.row, s.col)));
            assert_eq!(s.value, m.get(s.row, s.col));
        }
        assert!(matches!(
            mask_project(&m, &[(1, 1), (1, 1)]),
            Err(Error::DuplicateIndex { row: 1, col: 1 })
        ));
        assert!(matches!(
            mask_project(&m, &[(10, 0)]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}
