//! Alternating minimization that splits a measurement matrix into a
//! consistent TDOA matrix plus a sparse skew-symmetric outlier matrix.
//!
//! Each iteration runs two globally optimal sub-steps:
//!
//! ```text
//! M_t = project(M~ - S_{t-1})
//! S_t = keep the k largest-magnitude pairs of (M~ - M_t)
//! ```
//!
//! so the objective `||M~ - M_t - S_t||_F^2` never increases.

use serde::{Deserialize, Serialize};

use crate::completion::Mask;
use crate::denoise::denoise_closed_form;
use crate::error::{Result, TdoaError};
use crate::matrix::TdoaMatrix;

pub const DEFAULT_EPS: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Sparse skew-symmetric outlier matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierMatrix {
    matrix: TdoaMatrix,
    /// Upper-triangle pairs `(i, j)`, `i < j`, holding a nonzero value.
    support: Vec<(usize, usize)>,
}

impl OutlierMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            matrix: TdoaMatrix::zeros(n),
            support: Vec::new(),
        }
    }

    /// Builds from `(i, j, value)` triplets; both orientations may be listed
    /// as long as they agree in sign.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut matrix = TdoaMatrix::zeros(n);
        let mut seen = vec![false; n * n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n || i == j {
                return Err(TdoaError::InvalidInput(format!(
                    "outlier index ({i},{j}) invalid for n={n}"
                )));
            }
            let (a, b, val) = if i < j { (i, j, v) } else { (j, i, -v) };
            if seen[a * n + b] && matrix.get(a, b) != val {
                return Err(TdoaError::NotSkewSymmetric {
                    row: i + 1,
                    col: j + 1,
                    deviation: (matrix.get(a, b) - val).abs(),
                });
            }
            seen[a * n + b] = true;
            matrix.set_pair(a, b, val);
        }
        Ok(Self::from_matrix(matrix))
    }

    fn from_matrix(matrix: TdoaMatrix) -> Self {
        let support = matrix
            .upper_pairs()
            .filter(|&(_, _, v)| v != 0.0)
            .map(|(i, j, _)| (i, j))
            .collect();
        Self { matrix, support }
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn matrix(&self) -> &TdoaMatrix {
        &self.matrix
    }

    pub fn support(&self) -> &[(usize, usize)] {
        &self.support
    }

    /// Number of nonzero entries, counting both orientations.
    pub fn nnz(&self) -> usize {
        2 * self.support.len()
    }

    /// Every nonzero entry, both orientations, row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..n {
            for j in 0..n {
                let v = self.matrix.get(i, j);
                if i != j && v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }
}

/// Output of [`hard_threshold_2k`].
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholded {
    pub outliers: OutlierMatrix,
    /// True when `k` exceeded the number of candidate pairs.
    pub clamped: bool,
}

/// Keeps the `k` largest-magnitude pairs (`2k` entries) of a skew-symmetric
/// residual and zeroes everything else.
///
/// Ties go to the lexicographically smaller `(row, col)`.
pub fn hard_threshold_2k(residual: &TdoaMatrix, k: usize) -> Thresholded {
    threshold_pairs(residual, k, None)
}

pub(crate) fn threshold_pairs(residual: &TdoaMatrix, k: usize, mask: Option<&Mask>) -> Thresholded {
    let n = residual.n();
    let mut candidates: Vec<(usize, usize, f64)> = residual
        .upper_pairs()
        .filter(|&(i, j, _)| mask.is_none_or(|m| m.is_visible(i, j)))
        .collect();
    let clamped = k > candidates.len();
    if k < candidates.len() {
        candidates.sort_by(|a, b| {
            b.2.abs()
                .total_cmp(&a.2.abs())
                .then_with(|| (a.0, a.1).cmp(&(b.0, b.1)))
        });
        candidates.truncate(k);
    }
    let mut s = TdoaMatrix::zeros(n);
    for (i, j, v) in candidates {
        s.set_pair(i, j, v);
    }
    Thresholded {
        outliers: OutlierMatrix::from_matrix(s),
        clamped,
    }
}

/// When the alternation is considered finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// Relative objective decrease between iterations falls below `eps`.
    #[default]
    RelativeChange,
    /// Relative objective itself falls below `eps`.
    RelativeLevel,
}

impl std::str::FromStr for StopRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "change" | "relative-change" => Ok(Self::RelativeChange),
            "level" | "relative-level" => Ok(Self::RelativeLevel),
            other => Err(format!(
                "unknown stop rule '{other}' (expected change|level)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustParams {
    /// Maximum number of outlier pairs.
    pub k: usize,
    pub eps: f64,
    pub max_iter: usize,
    pub stop: StopRule,
}

impl RobustParams {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            eps: DEFAULT_EPS,
            max_iter: DEFAULT_MAX_ITER,
            stop: StopRule::default(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(TdoaError::InvalidInput(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.max_iter == 0 {
            return Err(TdoaError::InvalidInput(
                "max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustResult {
    pub m_star: TdoaMatrix,
    pub s_star: OutlierMatrix,
    pub iterations: usize,
    /// Objective after each iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// The outlier budget exceeded the available pairs and was clamped.
    pub clamped: bool,
}

impl RobustResult {
    fn trivial(n: usize) -> Self {
        Self {
            m_star: TdoaMatrix::zeros(n),
            s_star: OutlierMatrix::zeros(n),
            iterations: 0,
            objective_trace: vec![0.0],
            converged: true,
            clamped: false,
        }
    }

    /// True when every objective value is at most its predecessor plus `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.objective_trace
            .windows(2)
            .all(|w| w[1] <= w[0] + slack)
    }
}

/// Robust denoising of a fully observed matrix with at most `k` outlier pairs.
pub fn robust_denoise(m_tilde: &TdoaMatrix, params: &RobustParams) -> Result<RobustResult> {
    params.validate()?;
    Ok(alternate(m_tilde, params, None, denoise_closed_form))
}

/// Shared alternation. `observed` must already be zero outside `mask`, and
/// `project` must return the least-squares consistent fit to its input on
/// the visible entries.
pub(crate) fn alternate(
    observed: &TdoaMatrix,
    params: &RobustParams,
    mask: Option<&Mask>,
    project: impl Fn(&TdoaMatrix) -> TdoaMatrix,
) -> RobustResult {
    let n = observed.n();
    let scale = observed.frobenius_norm_sq();
    if scale == 0.0 {
        return RobustResult::trivial(n);
    }

    let visible_residual = |m: &TdoaMatrix| -> TdoaMatrix {
        let r = observed.sub(m);
        match mask {
            Some(mask) => mask.apply(&r),
            None => r,
        }
    };

    let mut s = OutlierMatrix::zeros(n);
    let mut m = TdoaMatrix::zeros(n);
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut clamped = false;
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        m = project(&observed.sub(s.matrix()));
        let residual = visible_residual(&m);
        let th = threshold_pairs(&residual, params.k, mask);
        clamped |= th.clamped;
        s = th.outliers;
        let objective = residual.sub(s.matrix()).frobenius_norm_sq();

        let done = match params.stop {
            StopRule::RelativeLevel => objective / scale < params.eps,
            StopRule::RelativeChange => match trace.last() {
                Some(&prev) => (prev - objective).abs() / scale < params.eps,
                None => objective == 0.0,
            },
        };
        trace.push(objective);
        if done {
            converged = true;
            break;
        }
    }

    RobustResult {
        m_star: m,
        s_star: s,
        iterations,
        objective_trace: trace,
        converged,
        clamped,
    }
}
