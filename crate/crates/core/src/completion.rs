//! TDOA matrix completion under a known availability mask.
//!
//! With `L` the symmetric 0/1 availability matrix (unit diagonal), `beta_i`
//! the number of available entries in row `i` and `Lbar = 1 - L`, the
//! masked least-squares fit has gauge vector
//!
//! ```text
//! x* = n (D_beta + Lbar)^-1 (L o M~) 1
//! ```
//!
//! The matrix `D_beta + Lbar` is the mask graph Laplacian plus the all-ones
//! matrix; it is invertible exactly when the graph of available pairs is
//! connected.

use nalgebra::DMatrix;

use crate::error::{Result, TdoaError};
use crate::matrix::{compose_gauge, GaugeVector, TdoaMatrix};
use crate::robust::{alternate, RobustParams, RobustResult};

/// Smallest-to-largest singular value ratio below which the recoverability
/// matrix is treated as singular.
pub const RECOVERABILITY_RTOL: f64 = 1e-10;

/// Symmetric availability mask with a unit diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    n: usize,
    visible: Vec<bool>,
}

impl Mask {
    pub fn full(n: usize) -> Self {
        Self {
            n,
            visible: vec![true; n * n],
        }
    }

    /// Builds a mask from unordered missing pairs (zero-based). Duplicates
    /// and either orientation are accepted.
    pub fn from_missing_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut mask = Self::full(n);
        for &(i, j) in pairs {
            if i >= n || j >= n {
                return Err(TdoaError::InvalidInput(format!(
                    "missing pair ({i},{j}) out of range for n={n}"
                )));
            }
            if i == j {
                return Err(TdoaError::InvalidInput(format!(
                    "diagonal entry ({i},{i}) cannot be missing"
                )));
            }
            mask.visible[i * n + j] = false;
            mask.visible[j * n + i] = false;
        }
        Ok(mask)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_visible(&self, i: usize, j: usize) -> bool {
        self.visible[i * self.n + j]
    }

    pub fn is_full(&self) -> bool {
        self.visible.iter().all(|&v| v)
    }

    /// Missing pairs `(i, j)` with `i < j`, row-major order.
    pub fn missing_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !self.is_visible(i, j))
            .collect()
    }

    pub fn visible_pair_count(&self) -> usize {
        self.n * (self.n - 1) / 2 - self.missing_pairs().len()
    }

    /// Available measurements per sensor, self included.
    pub fn beta(&self) -> Vec<usize> {
        self.visible
            .chunks_exact(self.n)
            .map(|row| row.iter().filter(|&&v| v).count())
            .collect()
    }

    /// `L o M`: zeroes the unavailable entries.
    pub fn apply(&self, m: &TdoaMatrix) -> TdoaMatrix {
        assert_eq!(m.n(), self.n, "dimension mismatch");
        TdoaMatrix::from_upper_fn(self.n, |i, j| {
            if self.is_visible(i, j) {
                m.get(i, j)
            } else {
                0.0
            }
        })
    }

    /// `D_beta + Lbar`.
    pub fn recoverability_matrix(&self) -> DMatrix<f64> {
        let beta = self.beta();
        DMatrix::from_fn(self.n, self.n, |i, j| {
            if i == j {
                beta[i] as f64
            } else if self.is_visible(i, j) {
                0.0
            } else {
                1.0
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recoverability {
    pub recoverable: bool,
    /// Largest over smallest singular value; infinite when singular.
    pub condition: f64,
    pub min_singular: f64,
    pub max_singular: f64,
}

pub fn recoverability(mask: &Mask) -> Recoverability {
    let sv = mask.recoverability_matrix().singular_values();
    let max_singular = sv.max();
    let min_singular = sv.min();
    let recoverable = min_singular > RECOVERABILITY_RTOL * max_singular;
    Recoverability {
        recoverable,
        condition: if min_singular > 0.0 {
            max_singular / min_singular
        } else {
            f64::INFINITY
        },
        min_singular,
        max_singular,
    }
}

/// How to treat masks whose completion is not unique.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMode {
    /// Fail with [`TdoaError::NotRecoverable`].
    #[default]
    Unique,
    /// Use the pseudo-inverse; the result is one of many minimizers.
    Pseudo,
}

/// Precomputed `Q = (D_beta + Lbar)^-1` for one mask.
#[derive(Debug, Clone)]
pub struct Completer {
    mask: Mask,
    q: DMatrix<f64>,
    recoverability: Recoverability,
}

impl Completer {
    pub fn new(mask: &Mask, mode: SolveMode) -> Result<Self> {
        let rec = recoverability(mask);
        let a = mask.recoverability_matrix();
        let q = if rec.recoverable {
            match a.clone().cholesky() {
                Some(chol) => chol.inverse(),
                None => pseudo_inverse(a)?,
            }
        } else if mode == SolveMode::Pseudo {
            pseudo_inverse(a)?
        } else {
            return Err(TdoaError::NotRecoverable {
                min_singular: rec.min_singular,
                condition: rec.condition,
            });
        };
        Ok(Self {
            mask: mask.clone(),
            q,
            recoverability: rec,
        })
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn recoverability(&self) -> Recoverability {
        self.recoverability
    }

    /// Gauge vector of the masked least-squares fit. Entries of `m` outside
    /// the mask are ignored.
    pub fn gauge(&self, m: &TdoaMatrix) -> GaugeVector {
        self.check_dim(m);
        let n = self.mask.n();
        let scale = (n as f64).sqrt();
        // n Q (L o M) 1 = sqrt(n) Q r, r = row sums of L o M
        let r: Vec<f64> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| self.mask.is_visible(i, j))
                    .map(|j| m.get(i, j))
                    .sum()
            })
            .collect();
        let x = (0..n)
            .map(|i| scale * (0..n).map(|j| self.q[(i, j)] * r[j]).sum::<f64>())
            .collect();
        GaugeVector::project(x)
    }

    /// Consistent TDOA matrix that best fits the visible entries of `m`.
    pub fn complete(&self, m: &TdoaMatrix) -> TdoaMatrix {
        compose_gauge(&self.gauge(m))
    }

    /// Literal `Q (L o M) 1 + 1 (L o M) Q` with dense matrix products.
    pub fn complete_matrix_form(&self, m: &TdoaMatrix) -> TdoaMatrix {
        self.check_dim(m);
        let n = self.mask.n();
        let ml = self.mask.apply(m).to_dmatrix();
        let ones = DMatrix::from_element(n, n, 1.0);
        let full = &self.q * &ml * &ones + &ones * &ml * &self.q;
        TdoaMatrix::skew_part(n, full.transpose().as_slice())
    }

    fn check_dim(&self, m: &TdoaMatrix) {
        assert_eq!(m.n(), self.mask.n(), "matrix and mask sizes differ");
    }
}

fn pseudo_inverse(a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let max = a.amax();
    a.svd(true, true)
        .pseudo_inverse(RECOVERABILITY_RTOL * max.max(1.0))
        .map_err(|e| TdoaError::Degenerate(e.to_string()))
}

fn check_mask(m: &TdoaMatrix, mask: &Mask) -> Result<()> {
    if m.n() != mask.n() {
        return Err(TdoaError::DimensionMismatch {
            expected: mask.n(),
            actual: m.n(),
        });
    }
    Ok(())
}

/// Masked least-squares completion; fails on non-recoverable masks.
pub fn complete(m_tilde: &TdoaMatrix, mask: &Mask) -> Result<TdoaMatrix> {
    complete_with(m_tilde, mask, SolveMode::Unique)
}

pub fn complete_with(m_tilde: &TdoaMatrix, mask: &Mask, mode: SolveMode) -> Result<TdoaMatrix> {
    check_mask(m_tilde, mask)?;
    Ok(Completer::new(mask, mode)?.complete(m_tilde))
}

/// Robust denoising restricted to the visible entries. Outliers are only
/// placed on visible pairs and `k` counts visible pairs.
pub fn robust_complete(
    m_tilde: &TdoaMatrix,
    mask: &Mask,
    params: &RobustParams,
) -> Result<RobustResult> {
    robust_complete_with(m_tilde, mask, params, SolveMode::Unique)
}

pub fn robust_complete_with(
    m_tilde: &TdoaMatrix,
    mask: &Mask,
    params: &RobustParams,
    mode: SolveMode,
) -> Result<RobustResult> {
    check_mask(m_tilde, mask)?;
    params.validate()?;
    let completer = Completer::new(mask, mode)?;
    let observed = mask.apply(m_tilde);
    Ok(alternate(&observed, params, Some(mask), |m| {
        completer.complete(m)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::denoise_closed_form;
    use crate::matrix::{from_toas, is_consistent, ToaVector};

    const MS: f64 = 1e-3;

    fn m123() -> TdoaMatrix {
        from_toas(&ToaVector::new(vec![1.0 * MS, 2.0 * MS, 3.0 * MS]).unwrap())
    }

    #[test]
    fn full_mask_is_scaled_identity() {
        let mask = Mask::full(5);
        assert_eq!(mask.recoverability_matrix(), DMatrix::identity(5, 5) * 5.0);
        let rec = recoverability(&mask);
        assert!(rec.recoverable);
        assert!((rec.condition - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_sensor_recoverability_matrix() {
        let mask = Mask::from_missing_pairs(3, &[(0, 2)]).unwrap();
        assert_eq!(mask.beta(), vec![2, 3, 2]);
        let want = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 1.0, 0.0, 3.0, 0.0, 1.0, 0.0, 2.0]);
        assert_eq!(mask.recoverability_matrix(), want);
        assert!((want.determinant() - 9.0).abs() < 1e-12);
        assert!(recoverability(&mask).recoverable);
    }

    #[test]
    fn isolated_sensor_is_not_recoverable() {
        let mask = Mask::from_missing_pairs(3, &[(0, 1), (0, 2)]).unwrap();
        assert!(!recoverability(&mask).recoverable);
        match complete(&m123(), &mask) {
            Err(TdoaError::NotRecoverable { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        // pseudo-inverse mode still produces a consistent answer
        let m = complete_with(&m123(), &mask, SolveMode::Pseudo).unwrap();
        assert!(is_consistent(&m, 1e-10).consistent);
    }

    #[test]
    fn three_sensor_exact_completion() {
        let mask = Mask::from_missing_pairs(3, &[(0, 2)]).unwrap();
        let mut corrupted = m123();
        corrupted.set_pair(0, 2, 123.0);
        let c = Completer::new(&mask, SolveMode::Unique).unwrap();
        let q_want =
            DMatrix::from_row_slice(3, 3, &[2.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 2.0]) / 3.0;
        assert!((c.q() - q_want).amax() < 1e-15);
        let m = c.complete(&corrupted);
        assert!(m.max_abs_diff(&m123()) < 1e-12 * MS);
        assert!(c.complete_matrix_form(&corrupted).max_abs_diff(&m123()) < 1e-12 * MS);
    }

    #[test]
    fn full_mask_matches_denoise() {
        let m = TdoaMatrix::from_upper_fn(6, |i, j| ((i * 5 + j * 11) % 7) as f64 * MS);
        let c = complete(&m, &Mask::full(6)).unwrap();
        assert!(c.max_abs_diff(&denoise_closed_form(&m)) < 1e-15);
    }

    #[test]
    fn mask_validation() {
        assert!(Mask::from_missing_pairs(3, &[(0, 3)]).is_err());
        assert!(Mask::from_missing_pairs(3, &[(1, 1)]).is_err());
        let mask = Mask::from_missing_pairs(4, &[(2, 0), (0, 2), (1, 3)]).unwrap();
        assert_eq!(mask.missing_pairs(), vec![(0, 2), (1, 3)]);
        assert_eq!(mask.visible_pair_count(), 4);
        assert!(complete(&TdoaMatrix::zeros(3), &mask).is_err());
    }

    #[test]
    fn robust_complete_keeps_outliers_on_visible_pairs() {
        let toas: Vec<f64> = (0..7).map(|i| ((i * 37) % 11) as f64 * 0.3 * MS).collect();
        let truth = from_toas(&ToaVector::new(toas).unwrap());
        let mask = Mask::from_missing_pairs(7, &[(0, 1), (2, 5), (3, 6)]).unwrap();
        let mut m = truth.clone();
        m.set_pair(1, 4, 7.0 * MS);
        m.set_pair(0, 1, -9.0 * MS);
        let params = RobustParams {
            eps: 1e-22,
            ..RobustParams::new(2)
        };
        let r = robust_complete(&m, &mask, &params).unwrap();
        for &(i, j) in r.s_star.support() {
            assert!(mask.is_visible(i, j));
        }
        assert!(r.m_star.max_abs_diff(&truth) < 1e-9 * MS);
        assert!(r.is_monotone(1e-15));
    }
}
