//! Dense-matrix primitives: observation matrices, sample covariance,
//! symmetric eigendecomposition and projection onto an eigenbasis.
//!
//! Storage is column-major (`faer::Mat`) because every hot path here works
//! column-wise: quantiles, centering, projection and Gram products.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::error::{Error, Result};

/// Relative tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_RTOL: f64 = 1e-12;
/// Negative eigenvalues down to `-NEGATIVE_CLAMP_RTOL * λ₁` are roundoff and get clamped to zero.
pub const NEGATIVE_CLAMP_RTOL: f64 = 1e-10;

/// An `n × d` observation matrix, rows are samples.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    data: Mat<f64>,
    names: Option<Vec<String>>,
}

impl DataMatrix {
    /// Builds a matrix from a row-major buffer of `n * d` finite values.
    pub fn from_row_major(n: usize, d: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, actual: values.len() });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / d.max(1), col: pos % d.max(1) });
        }
        Ok(Self { data: Mat::from_fn(n, d, |i, j| values[i * d + j]), names: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::RaggedRows { row: i, expected: d, found: row.len() });
            }
            flat.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), d, &flat)
    }

    /// Wraps an existing column-major matrix after checking every entry is finite.
    pub fn from_mat(data: Mat<f64>) -> Result<Self> {
        for j in 0..data.ncols() {
            if let Some(i) = data.col_as_slice(j).iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
        Ok(Self { data, names: None })
    }

    pub(crate) fn from_mat_unchecked(data: Mat<f64>) -> Self {
        Self { data, names: None }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.ncols() {
            return Err(Error::DimensionMismatch { expected: self.ncols(), actual: names.len() });
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        self.data.col_as_slice(j)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.ncols()).map(|j| self.data[(i, j)]).collect()
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.data.as_ref()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.nrows() as f64;
        (0..self.ncols()).map(|j| self.column(j).iter().sum::<f64>() / n).collect()
    }

    /// Copies the given rows, in the given order; indices may repeat.
    pub fn select_rows(&self, rows: &[usize]) -> DataMatrix {
        let data = Mat::from_fn(rows.len(), self.ncols(), |i, j| self.data[(rows[i], j)]);
        DataMatrix { data, names: self.names.clone() }
    }

    /// Returns the matrix with every entry multiplied by `s`.
    pub fn scaled(&self, s: f64) -> DataMatrix {
        let data = Mat::from_fn(self.nrows(), self.ncols(), |i, j| s * self.data[(i, j)]);
        DataMatrix { data, names: self.names.clone() }
    }
}

/// A symmetric `d × d` covariance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix {
    m: Mat<f64>,
}

impl CovMatrix {
    pub fn new(m: Mat<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), actual: m.ncols() });
        }
        let d = m.nrows();
        let mut scale = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                scale = scale.max(v.abs());
            }
        }
        for j in 0..d {
            if m[(j, j)] < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "covariance diagonal entry {j} is negative ({})",
                    m[(j, j)]
                )));
            }
            for i in (j + 1)..d {
                let diff = (m[(i, j)] - m[(j, i)]).abs();
                if diff > SYMMETRY_RTOL * scale {
                    return Err(Error::NotSymmetric { i, j, diff });
                }
            }
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, actual: bad.len() });
        }
        Self::new(Mat::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let d = values.len();
        Self::new(Mat::from_fn(d, d, |i, j| if i == j { values[i] } else { 0.0 }))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.m.as_ref()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.m[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.dim() {
            acc += self.m.col_as_slice(j).iter().map(|v| v * v).sum::<f64>();
        }
        acc.sqrt()
    }

    pub fn scaled(&self, s: f64) -> CovMatrix {
        CovMatrix { m: Mat::from_fn(self.dim(), self.dim(), |i, j| s * self.m[(i, j)]) }
    }
}

/// Eigenvalues `λ₁ ≥ … ≥ λ_d ≥ 0` with orthonormal eigenvectors as the columns of `vectors`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenBasis {
    eigenvalues: Vec<f64>,
    vectors: Mat<f64>,
    clamped: f64,
}

impl EigenBasis {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vectors(&self) -> MatRef<'_, f64> {
        self.vectors.as_ref()
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        self.vectors.col_as_slice(j)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Total magnitude of negative roundoff eigenvalues that were clamped to zero.
    pub fn clamped(&self) -> f64 {
        self.clamped
    }

    /// Builds a basis from explicit parts. Eigenvalues must be non-increasing and
    /// the vectors orthonormal to `1e-10`.
    pub fn from_parts(eigenvalues: Vec<f64>, vectors: Mat<f64>) -> Result<Self> {
        let d = eigenvalues.len();
        if vectors.nrows() != d || vectors.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: vectors.ncols() });
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) || eigenvalues.iter().any(|l| *l < 0.0) {
            return Err(Error::InvalidParameter(
                "eigenvalues must be nonnegative and non-increasing".into(),
            ));
        }
        if orthonormality_defect(vectors.as_ref()) > 1e-10 {
            return Err(Error::InvalidParameter("eigenvectors are not orthonormal".into()));
        }
        Ok(Self { eigenvalues, vectors, clamped: 0.0 })
    }

    /// Identity rotation with the given (sorted) variances.
    pub fn axis_aligned(eigenvalues: Vec<f64>) -> Result<Self> {
        let d = eigenvalues.len();
        Self::from_parts(eigenvalues, Mat::identity(d, d))
    }
}

/// `max |VᵀV − I|`.
pub fn orthonormality_defect(v: MatRef<'_, f64>) -> f64 {
    let d = v.ncols();
    let mut gram = Mat::<f64>::zeros(d, d);
    matmul(&mut gram, Accum::Replace, v.transpose(), v, 1.0, Par::Seq);
    let mut worst = 0.0f64;
    for j in 0..d {
        for i in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Unbiased sample covariance (denominator `n − 1`).
pub fn sample_covariance(x: &DataMatrix) -> Result<CovMatrix> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let centered = centered(x, &x.column_means());
    let d = x.ncols();
    let mut c = Mat::<f64>::zeros(d, d);
    matmul(
        &mut c,
        Accum::Replace,
        centered.transpose(),
        centered.as_ref(),
        1.0 / (n as f64 - 1.0),
        Par::Seq,
    );
    for j in 0..d {
        for i in (j + 1)..d {
            let avg = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = avg;
            c[(j, i)] = avg;
        }
    }
    Ok(CovMatrix { m: c })
}

fn centered(x: &DataMatrix, means: &[f64]) -> Mat<f64> {
    let mut out = x.data.clone();
    for (j, mean) in means.iter().enumerate() {
        for v in out.col_as_slice_mut(j) {
            *v -= mean;
        }
    }
    out
}

/// Symmetric eigendecomposition, eigenvalues sorted non-increasing.
///
/// Each eigenvector is sign-normalized so its largest-magnitude entry (first
/// one on ties) is positive. Equal eigenvalues keep the solver's order.
pub fn eigendecompose(c: &CovMatrix) -> Result<EigenBasis> {
    let d = c.dim();
    let evd = c.m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenNoConvergence)?;
    let ascending = evd.S().column_vector();
    let u = evd.U();
    let mut eigenvalues: Vec<f64> = (0..d).rev().map(|j| ascending[j]).collect();
    let mut vectors = Mat::from_fn(d, d, |i, j| u[(i, d - 1 - j)]);
    for j in 0..d {
        let col = vectors.col_as_slice_mut(j);
        let mut pivot = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let clamped = clamp_negative(&mut eigenvalues)?;
    if clamped > 0.0 {
        log::debug!("clamped {clamped:e} of negative eigenvalue mass to zero");
    }
    Ok(EigenBasis { eigenvalues, vectors, clamped })
}

/// Eigenvalues only, non-increasing, roundoff negatives clamped.
pub fn eigenvalues(c: &CovMatrix) -> Result<Vec<f64>> {
    let mut values = c.m.self_adjoint_eigenvalues(Side::Lower).map_err(|_| Error::EigenNoConvergence)?;
    values.reverse();
    clamp_negative(&mut values)?;
    Ok(values)
}

fn clamp_negative(values: &mut [f64]) -> Result<f64> {
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let mut clamped = 0.0;
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < -NEGATIVE_CLAMP_RTOL * top {
                return Err(Error::NotPositiveSemidefinite { min: *v, max: top });
            }
            clamped += -*v;
            *v = 0.0;
        }
    }
    Ok(clamped)
}

/// Rotates centered rows into the eigenbasis: row `i` becomes `Vᵀ (xᵢ − x̄)`.
pub fn project(x: &DataMatrix, basis: &EigenBasis) -> Result<DataMatrix> {
    let components: Vec<usize> = (0..basis.dim()).collect();
    project_components(x, basis, &components)
}

/// Like [`project`] but only onto the listed components, in the listed order.
pub fn project_components(x: &DataMatrix, basis: &EigenBasis, components: &[usize]) -> Result<DataMatrix> {
    if x.ncols() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), actual: x.ncols() });
    }
    if let Some(&bad) = components.iter().find(|&&c| c >= basis.dim()) {
        return Err(Error::InvalidParameter(format!("component index {bad} out of range")));
    }
    let centered = centered(x, &x.column_means());
    let v = Mat::from_fn(basis.dim(), components.len(), |i, j| basis.vectors[(i, components[j])]);
    let mut y = Mat::<f64>::zeros(x.nrows(), components.len());
    matmul(&mut y, Accum::Replace, centered.as_ref(), v.as_ref(), 1.0, Par::Seq);
    Ok(DataMatrix::from_mat_unchecked(y))
}
