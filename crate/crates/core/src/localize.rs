//! Closed-form two-stage weighted least squares TDOA localizer (Chan & Ho).
//!
//! Coordinates are shifted so that the reference sensor sits at the origin.
//! With `d_i` the offset of sensor `i` and `r_i = c * dtau_i1` its range
//! difference, the first stage solves the linear system
//!
//! ```text
//! d_i . u + r_i R_1 = (|d_i|^2 - r_i^2) / 2
//! ```
//!
//! treating the source offset `u` and reference range `R_1` as independent.
//! It is solved once with identity weighting and once with the weighting
//! refined from that estimate. The second stage fits `u_k^2` to the
//! first-stage values of `u_k^2` and `R_1^2 = |u|^2`, and takes the root
//! signs from the first stage.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};

use crate::error::{Result, TdoaError};

/// Minimum sensor count for a 3-D fix.
pub const MIN_SENSORS: usize = 5;

/// Estimates the source position from delays relative to sensor 1.
///
/// `tdoa_column[k]` is `tau_{k+2} - tau_1` in seconds, for `k = 0..n-1`.
pub fn localize(tdoa_column: &[f64], sensors: &[[f64; 3]], c: f64) -> Result<[f64; 3]> {
    let n = sensors.len();
    if n < MIN_SENSORS {
        return Err(TdoaError::InvalidInput(format!(
            "3-D localization needs at least {MIN_SENSORS} sensors, got {n}"
        )));
    }
    if tdoa_column.len() != n - 1 {
        return Err(TdoaError::DimensionMismatch {
            expected: n - 1,
            actual: tdoa_column.len(),
        });
    }
    if tdoa_column.iter().any(|v| !v.is_finite()) {
        return Err(TdoaError::InvalidInput("non-finite delay".into()));
    }

    let origin = Vector3::from(sensors[0]);
    let offsets: Vec<Vector3<f64>> = sensors[1..]
        .iter()
        .map(|s| Vector3::from(*s) - origin)
        .collect();
    let ranges: Vec<f64> = tdoa_column.iter().map(|t| c * t).collect();
    let m = n - 1;

    let g = DMatrix::from_fn(m, 4, |i, j| if j < 3 { offsets[i][j] } else { ranges[i] });
    let h = DVector::from_fn(m, |i, _| {
        0.5 * (offsets[i].norm_squared() - ranges[i] * ranges[i])
    });

    // identity weighting, then B Q B with B = diag(distance to each sensor)
    let (z0, _) = weighted_solve(&g, &h, None)?;
    let u0 = Vector3::new(z0[0], z0[1], z0[2]);
    let weights = DVector::from_iterator(
        m,
        offsets.iter().map(|d| {
            let dist = (u0 - d).norm().max(1e-9);
            1.0 / (dist * dist)
        }),
    );
    let (z1, info1) = match weighted_solve(&g, &h, Some(&weights)) {
        Ok((z, info)) => (z, Some(info)),
        Err(_) => (z0, None),
    };
    let u1 = Vector3::new(z1[0], z1[1], z1[2]);

    let refined = info1
        .and_then(|info| second_stage(&z1, &info))
        .unwrap_or(u1);
    let estimate = refined + origin;
    if estimate.iter().any(|v| !v.is_finite()) {
        return Err(TdoaError::LocalizationFailed("non-finite estimate".into()));
    }
    Ok([estimate[0], estimate[1], estimate[2]])
}

/// Solves `(G^T W G) z = G^T W h` with diagonal `W` and returns `z` along with
/// the information matrix `G^T W G` (the inverse covariance of `z`).
fn weighted_solve(
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    weights: Option<&DVector<f64>>,
) -> Result<(Vector4<f64>, Matrix4<f64>)> {
    let mut gw = g.transpose();
    if let Some(w) = weights {
        for (j, mut col) in gw.column_iter_mut().enumerate() {
            col *= w[j];
        }
    }
    let info: Matrix4<f64> = (&gw * g).fixed_view::<4, 4>(0, 0).into_owned();
    let rhs: Vector4<f64> = (&gw * h).fixed_rows::<4>(0).into_owned();

    let sv = info.singular_values();
    if sv.min().is_nan() || sv.min() <= 1e-12 * sv.max() {
        return Err(TdoaError::LocalizationFailed(
            "singular first-stage normal equations (degenerate geometry)".into(),
        ));
    }
    let z = info
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .or_else(|| info.lu().solve(&rhs))
        .ok_or_else(|| TdoaError::LocalizationFailed("first-stage solve failed".into()))?;
    Ok((z, info))
}

/// Second stage: exploits `R_1^2 = |u|^2`. Returns `None` when the
/// weighting is singular, in which case the first-stage estimate is kept.
fn second_stage(z: &Vector4<f64>, info: &Matrix4<f64>) -> Option<Vector3<f64>> {
    let ga = Matrix3x4::new(
        1.0, 0.0, 0.0, 1.0, //
        0.0, 1.0, 0.0, 1.0, //
        0.0, 0.0, 1.0, 1.0,
    )
    .transpose();
    let h2 = z.map(|v| v * v);
    // Psi' = 4 B cov B, so Psi'^-1 = B^-1 info B^-1 / 4
    let b_inv = z.map(|v| 1.0 / v);
    if b_inv.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let w = Matrix4::from_diagonal(&b_inv) * info * Matrix4::from_diagonal(&b_inv) * 0.25;
    let lhs: Matrix3<f64> = ga.transpose() * w * ga;
    let rhs: Vector3<f64> = ga.transpose() * w * h2;
    let sq = lhs.cholesky()?.solve(&rhs);
    if sq.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(Vector3::from_fn(|k, _| {
        z[k].signum() * sq[k].max(0.0).sqrt()
    }))
}
