//! TDOA matrices and their rank-2 gauge parameterization.
//!
//! A TDOA matrix holds `M[i][j] = tau_i - tau_j` for every sensor pair. Every
//! consistent matrix can be written as `M = x 1^T - 1 x^T` with `1` the unit
//! all-ones direction and `x` orthogonal to it; `x = M 1` recovers the gauge
//! vector. These two maps are [`compose`] and [`decompose`].

use serde::{Deserialize, Serialize};

use crate::error::{Result, TdoaError};

/// Asymmetry tolerated by [`TdoaMatrix::from_row_major`], in seconds.
pub const PARSE_SKEW_TOLERANCE: f64 = 1e-9;

/// Default tolerance for [`is_consistent`].
pub const CONSISTENCY_TOLERANCE: f64 = 1e-10;

/// Times of arrival at each sensor, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToaVector(Vec<f64>);

impl ToaVector {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if tau.len() < 2 {
            return Err(TdoaError::InvalidInput(format!(
                "need at least 2 times of arrival, got {}",
                tau.len()
            )));
        }
        if let Some(i) = tau.iter().position(|t| !t.is_finite()) {
            return Err(TdoaError::InvalidInput(format!(
                "time of arrival {} is not finite",
                i + 1
            )));
        }
        Ok(Self(tau))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Dense skew-symmetric matrix of pairwise delay differences, in seconds.
///
/// Construction always yields an exactly skew-symmetric matrix with a zero
/// diagonal; every operation in this crate preserves that.
#[derive(Debug, Clone, PartialEq)]
pub struct TdoaMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl TdoaMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    /// Builds a matrix from its strict upper triangle, `f(i, j)` for `i < j`.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i + 1..n {
                m.set_pair(i, j, f(i, j));
            }
        }
        m
    }

    /// Validates a row-major `n x n` array and returns its skew-symmetric part.
    ///
    /// Entries whose asymmetry `|a_ij + a_ji|` (or diagonal magnitude)
    /// exceeds `tol` are rejected with the worst offender in the error.
    pub fn from_row_major(n: usize, entries: Vec<f64>, tol: f64) -> Result<Self> {
        if n == 0 {
            return Err(TdoaError::InvalidInput(
                "matrix size must be positive".into(),
            ));
        }
        if entries.len() != n * n {
            return Err(TdoaError::DimensionMismatch {
                expected: n * n,
                actual: entries.len(),
            });
        }
        if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
            return Err(TdoaError::InvalidInput(format!(
                "entry ({},{}) is not finite",
                k / n + 1,
                k % n + 1
            )));
        }
        let (row, col, deviation) = worst_asymmetry(n, &entries);
        if deviation > tol {
            return Err(TdoaError::NotSkewSymmetric {
                row: row + 1,
                col: col + 1,
                deviation,
            });
        }
        Ok(Self::skew_part(n, &entries))
    }

    /// `(A - A^T) / 2` of an arbitrary row-major square array.
    pub fn skew_part(n: usize, entries: &[f64]) -> Self {
        Self::from_upper_fn(n, |i, j| 0.5 * (entries[i * n + j] - entries[j * n + i]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Sets `M[i][j] = value` and `M[j][i] = -value`. Requires `i != j`.
    #[inline]
    pub fn set_pair(&mut self, i: usize, j: usize, value: f64) {
        debug_assert_ne!(i, j);
        self.entries[i * self.n + j] = value;
        self.entries[j * self.n + i] = -value;
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.entries
    }

    /// Column `j`: the delays of every sensor with respect to sensor `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries
            .chunks_exact(self.n)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&v| v == 0.0)
    }

    /// Iterates `(i, j, M[i][j])` over the strict upper triangle.
    pub fn upper_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j, self.get(i, j))))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Largest absolute elementwise difference to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n, "dimension mismatch");
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        Self {
            n: self.n,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }
}

/// Worst skew-symmetry violation as zero-based `(row, col, |a_ij + a_ji|)`.
fn worst_asymmetry(n: usize, entries: &[f64]) -> (usize, usize, f64) {
    let mut worst = (0, 0, 0.0);
    for i in 0..n {
        for j in i..n {
            let dev = if i == j {
                entries[i * n + i].abs()
            } else {
                (entries[i * n + j] + entries[j * n + i]).abs()
            };
            if dev > worst.2 {
                worst = (i, j, dev);
            }
        }
    }
    worst
}

/// `M[i][j] = tau_i - tau_j`.
pub fn from_toas(toas: &ToaVector) -> TdoaMatrix {
    let tau = toas.as_slice();
    TdoaMatrix::from_upper_fn(tau.len(), |i, j| tau[i] - tau[j])
}

/// Gauge vector `x`, orthogonal to the all-ones direction.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeVector {
    x: Vec<f64>,
    /// `sum_i x_i` at construction time.
    residual: f64,
}

impl GaugeVector {
    /// Projects an arbitrary vector onto the hyperplane orthogonal to `1`.
    pub fn project(mut x: Vec<f64>) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        x.iter_mut().for_each(|v| *v -= mean);
        Self::wrap(x)
    }

    fn wrap(x: Vec<f64>) -> Self {
        let residual = x.iter().sum();
        Self { x, residual }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.x
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn constraint_residual(&self) -> f64 {
        self.residual
    }

    pub fn norm(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Maps a gauge vector to its TDOA matrix, `M[i][j] = (x_i - x_j) / sqrt(n)`.
///
/// Input need not be orthogonal to `1`; the all-ones component is in the
/// kernel of the map and is removed first.
pub fn compose(x: &[f64]) -> TdoaMatrix {
    let g = GaugeVector::project(x.to_vec());
    compose_gauge(&g)
}

pub fn compose_gauge(g: &GaugeVector) -> TdoaMatrix {
    let x = g.as_slice();
    let inv_sqrt_n = 1.0 / (x.len() as f64).sqrt();
    TdoaMatrix::from_upper_fn(x.len(), |i, j| (x[i] - x[j]) * inv_sqrt_n)
}

/// `x = M 1` with `1 = (1, ..., 1) / sqrt(n)`.
pub fn decompose(m: &TdoaMatrix) -> GaugeVector {
    let inv_sqrt_n = 1.0 / (m.n() as f64).sqrt();
    GaugeVector::wrap(m.row_sums().into_iter().map(|s| s * inv_sqrt_n).collect())
}

/// Singular pair of a consistent TDOA matrix, `M = sigma (u 1^T - 1 u^T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdPair {
    pub u_hat: Vec<f64>,
    pub sigma: f64,
}

impl SvdPair {
    pub fn reconstruct(&self) -> TdoaMatrix {
        let n = self.u_hat.len();
        let scale = self.sigma / (n as f64).sqrt();
        TdoaMatrix::from_upper_fn(n, |i, j| scale * (self.u_hat[i] - self.u_hat[j]))
    }
}

pub fn svd_params(m: &TdoaMatrix) -> Result<SvdPair> {
    let x = decompose(m).into_vec();
    let sigma = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if sigma == 0.0 {
        return Err(TdoaError::Degenerate(
            "zero TDOA matrix has no singular direction".into(),
        ));
    }
    Ok(SvdPair {
        u_hat: x.into_iter().map(|v| v / sigma).collect(),
        sigma,
    })
}

/// Outcome of [`is_consistent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Consistency {
    pub consistent: bool,
    /// `||M - compose(decompose(M))||_F`.
    pub residual: f64,
    /// Residual divided by `max(1, ||M||_F)`.
    pub relative_residual: f64,
}

/// Checks that `M` lies in the set of TDOA matrices.
///
/// The projection residual is zero iff `M` is rank 2 (or 0) with a singular
/// subspace containing the all-ones direction.
pub fn is_consistent(m: &TdoaMatrix, tol: f64) -> Consistency {
    let residual = m.sub(&compose_gauge(&decompose(m))).frobenius_norm();
    let relative_residual = residual / m.frobenius_norm().max(1.0);
    Consistency {
        consistent: relative_residual <= tol,
        residual,
        relative_residual,
    }
}
