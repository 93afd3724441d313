//! Comparison methods: static distribution fits of route time, Gamma mixtures,
//! and static route laws built from segment data under independence or a
//! Gaussian copula.

mod mixture;
mod route_methods;
mod static_fit;

pub use mixture::{fit_gamma_mixture, MixtureConfig, MixtureFit};
pub use route_methods::{
    indep_gamma_sum, route_copula_mc, route_indep_gamma, route_indep_normal, variance_underestimation_ratio, CopulaConfig,
    CopulaFit, CorrelationKind, StaticRouteLaw, DEFAULT_COPULA_DRAWS, MIN_EIGENVALUE,
};
pub use static_fit::{fit_all_static, fit_gamma_mle, fit_static, Family, StaticFit};

use crate::error::{Error, Result};

/// Check a row-major `n x m` matrix: rectangular, nonempty, positive and finite.
pub(crate) fn check_matrix(rows: &[Vec<f64>]) -> Result<usize> {
    let m = rows.first().map(Vec::len).ok_or_else(|| Error::Data("empty segment matrix".into()))?;
    if m == 0 {
        return Err(Error::Data("segment matrix has no columns".into()));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != m {
            return Err(Error::Shape {
                what: "segment matrix row",
                expected: m,
                got: r.len(),
            });
        }
        if let Some(v) = r.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Data(format!("row {i}: travel times must be positive and finite, got {v}")));
        }
    }
    Ok(m)
}

pub(crate) fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

pub(crate) fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
