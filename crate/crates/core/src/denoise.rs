//! Least-squares projection of a noisy measurement matrix onto the TDOA set.

use crate::matrix::{compose_gauge, decompose, TdoaMatrix};

/// Closest TDOA matrix to `m_tilde` in Frobenius norm.
///
/// Computed through the gauge round trip in `O(n^2)`.
pub fn denoise_closed_form(m_tilde: &TdoaMatrix) -> TdoaMatrix {
    compose_gauge(&decompose(m_tilde))
}

/// Element-wise Gauss-Markov form, `M*[i][j] = (1/n) sum_k (M[i][k] + M[k][j])`.
///
/// Evaluated literally in `O(n^3)`; kept as an independent cross-check of
/// [`denoise_closed_form`].
pub fn denoise_element_form(m_tilde: &TdoaMatrix) -> TdoaMatrix {
    let n = m_tilde.n();
    let inv_n = 1.0 / n as f64;
    TdoaMatrix::from_upper_fn(n, |i, j| {
        let s: f64 = (0..n).map(|k| m_tilde.get(i, k) + m_tilde.get(k, j)).sum();
        s * inv_n
    })
}

/// Selects a denoising route by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenoiseMethod {
    #[default]
    Closed,
    Element,
}

impl DenoiseMethod {
    pub fn apply(self, m_tilde: &TdoaMatrix) -> TdoaMatrix {
        match self {
            DenoiseMethod::Closed => denoise_closed_form(m_tilde),
            DenoiseMethod::Element => denoise_element_form(m_tilde),
        }
    }
}

impl std::str::FromStr for DenoiseMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "closed" => Ok(Self::Closed),
            "element" => Ok(Self::Element),
            other => Err(format!(
                "unknown method '{other}' (expected closed|element)"
            )),
        }
    }
}
