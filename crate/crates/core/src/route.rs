//! Route travel time predictive and reliability metrics.
//!
//! Given the environment, the route total is a sum of independent Gammas with
//! rates `lambda_j eta`. It is replaced by the single Gamma `Gam(alpha*, c eta)`
//! with the same conditional mean and variance, where
//!
//! ```text
//! alpha* = alpha (sum 1/lambda_j)^2 / sum 1/lambda_j^2,    c = sum 1/lambda_j / sum 1/lambda_j^2
//! ```
//!
//! Neither depends on `eta`, so integrating against the Gamma prior of the
//! environment gives `(a/alpha*) c S / b ~ F(2 alpha*, 2 a)`.

use serde::{Deserialize, Serialize};

use crate::corridor::CorridorModel;
use crate::dist::{self, FLaw};
use crate::env_filter::{GammaState, HyperParams, ObservationSeries};
use crate::error::{domain, Error, Result};

/// Minimum number of periods for the free-flow percentile.
pub const MIN_FREE_FLOW_OBS: usize = 20;
/// Percentile of route travel time taken as free flow.
pub const FREE_FLOW_LEVEL: f64 = 0.05;
/// Default on-time threshold as a multiple of free-flow travel time.
pub const DEFAULT_TAU_MULTIPLE: f64 = 1.5;

/// Route predictive law: `S | eta ~ Gam(alpha_star, c eta)`, `eta ~ Gam(a_tilde, b_tilde)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutePredictive {
    pub alpha_star: f64,
    pub c: f64,
    pub a_tilde: f64,
    pub b_tilde: f64,
}

/// Effective route shape `alpha*` and rate multiplier `c` from the segment rates.
pub fn moment_match(hyper: &HyperParams, model: &CorridorModel) -> (f64, f64) {
    moment_match_lambdas(hyper.alpha, model.lambdas())
}

pub(crate) fn moment_match_lambdas(alpha: f64, lambdas: &[f64]) -> (f64, f64) {
    let (s1, s2) = lambdas.iter().fold((0.0, 0.0), |(s1, s2), l| (s1 + 1.0 / l, s2 + 1.0 / (l * l)));
    (alpha * s1 * s1 / s2, s1 / s2)
}

impl RoutePredictive {
    pub fn new(alpha_star: f64, c: f64, a_tilde: f64, b_tilde: f64) -> Result<Self> {
        for (name, v) in [("alpha_star", alpha_star), ("c", c), ("a_tilde", a_tilde), ("b_tilde", b_tilde)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain("RoutePredictive::new", format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            alpha_star,
            c,
            a_tilde,
            b_tilde,
        })
    }

    /// Route predictive from an evolved prior `(a~, b~)` of the corridor filter.
    /// Covariates scale the environment rate, which folds into `b~`.
    pub fn from_prior(hyper: &HyperParams, model: &CorridorModel, prior: &GammaState, u: &[f64]) -> Result<Self> {
        let (alpha_star, c) = moment_match(hyper, model);
        let s = hyper.covariate_exponent(u)?;
        Self::new(alpha_star, c, prior.a, prior.b * (-s).exp())
    }

    fn f_law(&self) -> FLaw {
        FLaw {
            df1: 2.0 * self.alpha_star,
            df2: 2.0 * self.a_tilde,
        }
    }

    /// `S -> F` scale: `x = scale * S`.
    fn to_f_scale(&self) -> f64 {
        self.a_tilde * self.c / (self.alpha_star * self.b_tilde)
    }

    /// Conditional law of the route total given the environment.
    pub fn conditional_law(&self, eta: f64) -> dist::GammaLaw {
        dist::GammaLaw {
            shape: self.alpha_star,
            rate: self.c * eta,
        }
    }

    /// Predictive mean (needs `a~ > 1`).
    pub fn mean(&self) -> Option<f64> {
        (self.a_tilde > 1.0).then(|| self.alpha_star * self.b_tilde / (self.c * (self.a_tilde - 1.0)))
    }
}

pub fn route_cdf(rp: &RoutePredictive, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(domain("route_cdf", format!("threshold must be positive, got {tau}")));
    }
    dist::f_cdf(&rp.f_law(), rp.to_f_scale() * tau)
}

/// Route predictive log density (Beta prime form).
pub fn route_logpdf(rp: &RoutePredictive, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(domain("route_logpdf", format!("route time must be positive, got {s}")));
    }
    let (al, a, b, c) = (rp.alpha_star, rp.a_tilde, rp.b_tilde, rp.c);
    Ok(dist::ln_gamma(al + a) - dist::ln_gamma(al) - dist::ln_gamma(a) + al * c.ln() + (al - 1.0) * s.ln() + a * b.ln()
        - (al + a) * (c * s + b).ln())
}

pub fn route_quantile(rp: &RoutePredictive, q: f64) -> Result<f64> {
    Ok(dist::f_quantile(&rp.f_law(), q)? / rp.to_f_scale())
}

/// Probability of completing the route within `tau`.
pub fn on_time_probability(rp: &RoutePredictive, tau: f64) -> Result<f64> {
    route_cdf(rp, tau)
}

/// 95th percentile of route time over free-flow route time.
pub fn planning_time_index(rp: &RoutePredictive, s_freeflow: f64) -> Result<f64> {
    if !(s_freeflow > 0.0 && s_freeflow.is_finite()) {
        return Err(domain("planning_time_index", format!("free-flow time must be positive, got {s_freeflow}")));
    }
    Ok(route_quantile(rp, 0.95)? / s_freeflow)
}

/// `(q95 - q50) / q50`.
pub fn buffer_index(rp: &RoutePredictive) -> Result<f64> {
    let q95 = route_quantile(rp, 0.95)?;
    let q50 = route_quantile(rp, 0.5)?;
    Ok(((q95 - q50) / q50).max(0.0))
}

/// Sample quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and nonempty.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Free-flow route travel time: 5th percentile of observed route totals.
pub fn free_flow_travel_time(series: &ObservationSeries) -> Result<f64> {
    if series.len() < MIN_FREE_FLOW_OBS {
        return Err(Error::Data(format!(
            "free-flow travel time needs at least {MIN_FREE_FLOW_OBS} observations, got {}",
            series.len()
        )));
    }
    let mut totals = series.route_totals();
    if totals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("route totals must be finite".into()));
    }
    totals.sort_by(f64::total_cmp);
    Ok(empirical_quantile(&totals, FREE_FLOW_LEVEL))
}
