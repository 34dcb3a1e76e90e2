//! Evaluation metrics on the non-redundant set (delays to sensor 1).

use crate::error::{Result, TdoaError};
use crate::matrix::TdoaMatrix;

/// Error energy at or below this fraction of the signal energy is reported
/// as a perfect estimate (`+inf` dB). 1e-20 corresponds to 200 dB, far below
/// any physically meaningful error and above accumulated rounding.
pub const PERFECT_RELATIVE_ENERGY: f64 = 1e-20;

/// `10 log10(sum_i M[i][0]^2 / sum_i (E[i][0] - M[i][0])^2)` over `i >= 1`.
///
/// Returns `f64::INFINITY` for a perfect estimate.
pub fn snr_db(truth: &TdoaMatrix, estimate: &TdoaMatrix) -> Result<f64> {
    if truth.n() != estimate.n() {
        return Err(TdoaError::DimensionMismatch {
            expected: truth.n(),
            actual: estimate.n(),
        });
    }
    let (signal, error) = (1..truth.n()).fold((0.0, 0.0), |(s, e), i| {
        let t = truth.get(i, 0);
        let d = estimate.get(i, 0) - t;
        (s + t * t, e + d * d)
    });
    if signal == 0.0 {
        return Err(TdoaError::UndefinedMetric(
            "non-redundant set of the ground truth is zero".into(),
        ));
    }
    if error <= PERFECT_RELATIVE_ENERGY * signal {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / error).log10())
}

/// Euclidean distance between two points.
pub fn position_error(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
