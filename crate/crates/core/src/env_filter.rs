//! Univariate dynamic Gamma filter.
//!
//! Observation `y_t ~ Gam(alpha, eta_t * exp(beta . u_t))`, environment
//! `eta_t = eta_{t-1} * eps_t / gamma` with `eps_t ~ Beta(gamma a, (1 - gamma) a)`.
//! Starting from `eta_0 ~ Gam(a_0, b_0)` every prior and posterior stays Gamma:
//! evolving multiplies both parameters by `gamma`, and observing `y_t` adds
//! `alpha` to the shape and the scaled observation to the rate.

use serde::{Deserialize, Serialize};

use crate::dist::{self, FLaw, GammaLaw};
use crate::error::{domain, Error, Result};

/// Largest admissible |beta . u| before the covariate scale is rejected.
pub const MAX_COVARIATE_EXPONENT: f64 = 50.0;

/// Shape used by the default initial state; above 2 so the first predictive
/// variance is finite.
pub const DEFAULT_INIT_SHAPE: f64 = 2.5;

/// Burn-in used by all evaluation statistics unless overridden.
pub const DEFAULT_BURN_IN: usize = 30;

/// Gamma law of the environment, `Gam(a, b)` in shape/rate form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaState {
    pub a: f64,
    pub b: f64,
}

impl GammaState {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
            return Err(domain("GammaState::new", format!("need a > 0 and b > 0, got ({a}, {b})")));
        }
        Ok(Self { a, b })
    }

    pub fn mean(&self) -> f64 {
        self.a / self.b
    }

    pub fn variance(&self) -> f64 {
        self.a / (self.b * self.b)
    }

    pub fn law(&self) -> GammaLaw {
        GammaLaw {
            shape: self.a,
            rate: self.b,
        }
    }

    /// Weakly informative starting state centred on an implied environment level.
    pub fn weak_prior(eta_hat: f64) -> Result<Self> {
        if !(eta_hat > 0.0 && eta_hat.is_finite()) {
            return Err(Error::Data(format!("implied initial environment must be positive, got {eta_hat}")));
        }
        Self::new(DEFAULT_INIT_SHAPE, DEFAULT_INIT_SHAPE / eta_hat)
    }
}

/// Model hyperparameters: observation shape, discount factor and covariate coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub gamma: f64,
    #[serde(default)]
    pub beta: Vec<f64>,
}

impl HyperParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        Self::with_beta(alpha, gamma, Vec::new())
    }

    pub fn with_beta(alpha: f64, gamma: f64, beta: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Config(format!("discount factor must lie in (0, 1), got {gamma}")));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config("covariate coefficients must be finite".into()));
        }
        Ok(Self { alpha, gamma, beta })
    }

    /// `beta . u`. An empty `u` means "no covariates" and gives 0.
    pub fn covariate_exponent(&self, u: &[f64]) -> Result<f64> {
        if u.is_empty() {
            return Ok(0.0);
        }
        if u.len() != self.beta.len() {
            return Err(Error::Shape {
                what: "covariate vector",
                expected: self.beta.len(),
                got: u.len(),
            });
        }
        let s: f64 = self.beta.iter().zip(u).map(|(b, x)| b * x).sum();
        if !s.is_finite() || s.abs() > MAX_COVARIATE_EXPONENT {
            return Err(Error::Data(format!(
                "covariate exponent beta.u = {s} exceeds the admissible range +/-{MAX_COVARIATE_EXPONENT}"
            )));
        }
        Ok(s)
    }
}

/// One time period of data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub t: usize,
    /// Travel times in minutes, one per segment.
    pub y: Vec<f64>,
    /// Covariates; empty when the model carries none.
    #[serde(default)]
    pub u: Vec<f64>,
    #[serde(default)]
    pub timestamp: Option<String>,
}

impl ObservationRecord {
    pub fn new(t: usize, y: Vec<f64>) -> Self {
        Self {
            t,
            y,
            u: Vec::new(),
            timestamp: None,
        }
    }

    pub fn route_total(&self) -> f64 {
        self.y.iter().sum()
    }
}

/// Time-ordered segment travel times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub segment_ids: Vec<String>,
    pub records: Vec<ObservationRecord>,
}

impl ObservationSeries {
    pub fn new(segment_ids: Vec<String>, records: Vec<ObservationRecord>) -> Result<Self> {
        for r in &records {
            if r.y.len() != segment_ids.len() {
                return Err(Error::Shape {
                    what: "observation record",
                    expected: segment_ids.len(),
                    got: r.y.len(),
                });
            }
        }
        Ok(Self { segment_ids, records })
    }

    /// Build a series from rows of segment travel times with generated ids `seg1..segm`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        let ids = (1..=m).map(|j| format!("seg{j}")).collect();
        let records = rows.into_iter().enumerate().map(|(t, y)| ObservationRecord::new(t + 1, y)).collect();
        Self::new(ids, records)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_segments(&self) -> usize {
        self.segment_ids.len()
    }

    /// Route travel time per period.
    pub fn route_totals(&self) -> Vec<f64> {
        self.records.iter().map(ObservationRecord::route_total).collect()
    }

    /// The series of route totals as a one-segment series.
    pub fn route_series(&self) -> ObservationSeries {
        ObservationSeries {
            segment_ids: vec!["route".into()],
            records: self
                .records
                .iter()
                .map(|r| ObservationRecord {
                    t: r.t,
                    y: vec![r.route_total()],
                    u: r.u.clone(),
                    timestamp: r.timestamp.clone(),
                })
                .collect(),
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.y[j]).collect()
    }

    /// Row-major n x m matrix of travel times.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.y.clone()).collect()
    }
}

/// Prior, posterior and one-step-ahead log predictive density at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterStep {
    pub prior: GammaState,
    pub posterior: GammaState,
    pub log_pred: f64,
}

/// Predictive mean and variance; `None` marks a moment that does not exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveMoments {
    pub mean: Option<f64>,
    pub variance: Option<f64>,
}

/// Markov step of the environment: `(a, b) -> (gamma a, gamma b)`.
pub fn evolve_state(state: &GammaState, hyper: &HyperParams) -> GammaState {
    GammaState {
        a: hyper.gamma * state.a,
        b: hyper.gamma * state.b,
    }
}

pub(crate) fn check_positive(t: usize, y: &[f64], ids: Option<&[String]>) -> Result<()> {
    for (j, &v) in y.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            let name = ids.and_then(|ids| ids.get(j)).map_or_else(|| format!("#{}", j + 1), Clone::clone);
            return Err(Error::Data(format!("t={t}: travel time for segment {name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// Conjugate update of an already-evolved prior with a scalar observation.
pub fn update_state(prior: &GammaState, hyper: &HyperParams, obs: &ObservationRecord) -> Result<GammaState> {
    if obs.y.len() != 1 {
        return Err(Error::Shape {
            what: "univariate observation",
            expected: 1,
            got: obs.y.len(),
        });
    }
    check_positive(obs.t, &obs.y, None)?;
    let s = hyper.covariate_exponent(&obs.u)?;
    Ok(GammaState {
        a: prior.a + hyper.alpha,
        b: prior.b + obs.y[0] * s.exp(),
    })
}

/// Log density of the compound-Gamma (Beta prime) one-step predictive.
pub fn predictive_logpdf(prior: &GammaState, hyper: &HyperParams, y: f64, u: &[f64]) -> Result<f64> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(domain("predictive_logpdf", format!("y must be positive, got {y}")));
    }
    let s = hyper.covariate_exponent(u)?;
    let (alpha, a, b) = (hyper.alpha, prior.a, prior.b);
    let ys = y * s.exp();
    Ok(dist::ln_gamma(alpha + a) - dist::ln_gamma(alpha) - dist::ln_gamma(a) + alpha * s + (alpha - 1.0) * y.ln()
        + a * b.ln()
        - (alpha + a) * (b + ys).ln())
}

fn predictive_f(prior: &GammaState, hyper: &HyperParams) -> FLaw {
    FLaw {
        df1: 2.0 * hyper.alpha,
        df2: 2.0 * prior.a,
    }
}

/// One-step predictive CDF, through `(a/alpha) y e^{beta.u} / b ~ F(2 alpha, 2 a)`.
pub fn predictive_cdf(prior: &GammaState, hyper: &HyperParams, y: f64, u: &[f64]) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(domain("predictive_cdf", format!("y must be nonnegative, got {y}")));
    }
    let s = hyper.covariate_exponent(u)?;
    let x = prior.a / hyper.alpha * y * s.exp() / prior.b;
    dist::f_cdf(&predictive_f(prior, hyper), x)
}

pub fn predictive_quantile(prior: &GammaState, hyper: &HyperParams, q: f64, u: &[f64]) -> Result<f64> {
    let s = hyper.covariate_exponent(u)?;
    let x = dist::f_quantile(&predictive_f(prior, hyper), q)?;
    Ok(x * hyper.alpha * prior.b / (prior.a * s.exp()))
}

/// Predictive mean (needs `a > 1`) and variance (needs `a > 2`).
pub fn predictive_moments(prior: &GammaState, hyper: &HyperParams, u: &[f64]) -> Result<PredictiveMoments> {
    let s = hyper.covariate_exponent(u)?;
    let (alpha, a, b) = (hyper.alpha, prior.a, prior.b);
    let mean = (a > 1.0).then(|| alpha * b / (a - 1.0) * (-s).exp());
    let variance =
        (a > 2.0).then(|| alpha * b * b * (alpha + a - 1.0) / ((a - 1.0).powi(2) * (a - 2.0)) * (-2.0 * s).exp());
    Ok(PredictiveMoments { mean, variance })
}

/// Default initial state: shape 2.5 centred on `alpha / y_1`.
pub fn default_init(series: &ObservationSeries, hyper: &HyperParams) -> Result<GammaState> {
    let first = series.records.first().ok_or_else(|| Error::Data("empty series".into()))?;
    check_positive(first.t, &first.y, Some(&series.segment_ids))?;
    let s = hyper.covariate_exponent(&first.u)?;
    let mean_y = first.route_total() / first.y.len() as f64;
    GammaState::weak_prior(hyper.alpha / (mean_y * s.exp()))
}

/// Run the univariate filter over a one-segment series.
pub fn run_filter(series: &ObservationSeries, hyper: &HyperParams, init: &GammaState) -> Result<Vec<FilterStep>> {
    if series.is_empty() {
        return Err(Error::Data("cannot filter an empty series".into()));
    }
    let mut state = *init;
    let mut out = Vec::with_capacity(series.len());
    for rec in &series.records {
        let prior = evolve_state(&state, hyper);
        let posterior = update_state(&prior, hyper, rec)?;
        let log_pred = predictive_logpdf(&prior, hyper, rec.y[0], &rec.u)?;
        out.push(FilterStep {
            prior,
            posterior,
            log_pred,
        });
        state = posterior;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(alpha: f64, gamma: f64) -> HyperParams {
        HyperParams::new(alpha, gamma).unwrap()
    }

    #[test]
    fn evolve_scales_both_parameters() {
        let s = evolve_state(&GammaState::new(2.0, 4.0).unwrap(), &hp(1.0, 0.5));
        assert_eq!(s, GammaState { a: 1.0, b: 2.0 });
    }

    #[test]
    fn evolve_preserves_mean_and_inflates_variance() {
        for (a, b, g) in [(2.0, 4.0, 0.5), (13.7, 0.31, 0.93), (0.4, 11.0, 0.05)] {
            let s = GammaState::new(a, b).unwrap();
            let e = evolve_state(&s, &hp(1.0, g));
            assert!((e.mean() - s.mean()).abs() <= 1e-15 * s.mean());
            assert!((e.variance() / s.variance() - 1.0 / g).abs() < 1e-12);
        }
    }

    #[test]
    fn update_is_conjugate_arithmetic() {
        let post = update_state(&GammaState { a: 1.0, b: 2.0 }, &hp(1.0, 0.5), &ObservationRecord::new(1, vec![1.0])).unwrap();
        assert_eq!(post, GammaState { a: 2.0, b: 3.0 });
        let tiny = update_state(&GammaState { a: 1.0, b: 2.0 }, &hp(1.3, 0.5), &ObservationRecord::new(1, vec![1e-300])).unwrap();
        assert_eq!(tiny.a, 2.3);
        assert_eq!(tiny.b, 2.0);
    }

    #[test]
    fn update_rejects_nonpositive_y_and_names_time() {
        let err = update_state(&GammaState { a: 1.0, b: 1.0 }, &hp(1.0, 0.5), &ObservationRecord::new(17, vec![0.0])).unwrap_err();
        assert!(matches!(&err, Error::Data(msg) if msg.contains("t=17")), "{err}");
        assert!(update_state(&GammaState { a: 1.0, b: 1.0 }, &hp(1.0, 0.5), &ObservationRecord::new(1, vec![-2.0])).is_err());
    }

    #[test]
    fn covariates_scale_the_rate() {
        let h = HyperParams::with_beta(1.0, 0.5, vec![0.5, -1.0]).unwrap();
        let rec = ObservationRecord {
            t: 1,
            y: vec![2.0],
            u: vec![2.0, 0.5],
            timestamp: None,
        };
        let post = update_state(&GammaState { a: 1.0, b: 1.0 }, &h, &rec).unwrap();
        assert!((post.b - (1.0 + 2.0 * 0.5f64.exp())).abs() < 1e-14);
        let m = predictive_moments(&GammaState { a: 3.0, b: 2.0 }, &h, &rec.u).unwrap();
        assert!((m.mean.unwrap() - (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn covariate_guards() {
        let h = HyperParams::with_beta(1.0, 0.5, vec![10.0]).unwrap();
        assert!(matches!(h.covariate_exponent(&[6.0]), Err(Error::Data(_))));
        assert!(matches!(h.covariate_exponent(&[1.0, 2.0]), Err(Error::Shape { .. })));
        assert_eq!(h.covariate_exponent(&[]).unwrap(), 0.0);
    }

    #[test]
    fn hyperparameter_validation() {
        assert!(HyperParams::new(1.0, 1.0).is_err());
        assert!(HyperParams::new(1.0, 0.0).is_err());
        assert!(HyperParams::new(0.0, 0.5).is_err());
        assert!(HyperParams::with_beta(1.0, 0.5, vec![f64::NAN]).is_err());
    }

    #[test]
    fn lomax_special_case() {
        let lp = predictive_logpdf(&GammaState { a: 1.0, b: 1.0 }, &hp(1.0, 0.5), 1.0, &[]).unwrap();
        assert!((lp - 0.25f64.ln()).abs() < 1e-14);
        for y in [0.1, 2.0, 7.5] {
            let lp = predictive_logpdf(&GammaState { a: 1.0, b: 1.0 }, &hp(1.0, 0.5), y, &[]).unwrap();
            assert!((lp.exp() - 1.0 / (1.0 + y).powi(2)).abs() < 1e-14);
        }
        assert!(predictive_logpdf(&GammaState { a: 1.0, b: 1.0 }, &hp(1.0, 0.5), 0.0, &[]).is_err());
    }

    #[test]
    fn predictive_median_closed_form() {
        let med = predictive_quantile(&GammaState { a: 1.0, b: 2.0 }, &hp(1.0, 0.5), 0.5, &[]).unwrap();
        assert!((med - 2.0).abs() < 1e-10);
        let c = predictive_cdf(&GammaState { a: 1.0, b: 2.0 }, &hp(1.0, 0.5), 2.0, &[]).unwrap();
        assert!((c - 0.5).abs() < 1e-14);
    }

    #[test]
    fn predictive_cdf_quantile_round_trip() {
        let prior = GammaState { a: 4.2, b: 7.0 };
        let h = hp(2.5, 0.8);
        for i in 1..100 {
            let q = i as f64 / 100.0;
            let y = predictive_quantile(&prior, &h, q, &[]).unwrap();
            assert!((predictive_cdf(&prior, &h, y, &[]).unwrap() - q).abs() < 1e-8);
        }
    }

    #[test]
    fn predictive_moment_values_and_thresholds() {
        let m = predictive_moments(&GammaState { a: 3.0, b: 2.0 }, &hp(1.0, 0.5), &[]).unwrap();
        assert!((m.mean.unwrap() - 1.0).abs() < 1e-15);
        assert!((m.variance.unwrap() - 3.0).abs() < 1e-14);
        let m = predictive_moments(&GammaState { a: 1.5, b: 2.0 }, &hp(1.0, 0.5), &[]).unwrap();
        assert!(m.mean.is_some());
        assert!(m.variance.is_none());
        let m = predictive_moments(&GammaState { a: 0.9, b: 2.0 }, &hp(1.0, 0.5), &[]).unwrap();
        assert!(m.mean.is_none());
    }

    #[test]
    fn predictive_variance_inflation_factor() {
        // Variance of the predictive over the plug-in Gamma at the prior mean of eta.
        let prior = GammaState { a: 6.0, b: 3.0 };
        let alpha = 2.0;
        let m = predictive_moments(&prior, &hp(alpha, 0.5), &[]).unwrap();
        let eta_bar = prior.b / (prior.a - 1.0);
        let plug_in_var = alpha * eta_bar * eta_bar;
        let want = (alpha + prior.a - 1.0) / (prior.a - 2.0);
        assert!((m.variance.unwrap() / plug_in_var - want).abs() < 1e-12);
    }

    #[test]
    fn run_filter_composes_steps() {
        let series = ObservationSeries::from_rows(vec![vec![1.2], vec![0.7], vec![2.5]]).unwrap();
        let h = hp(1.5, 0.7);
        let init = GammaState::new(2.0, 3.0).unwrap();
        let out = run_filter(&series, &h, &init).unwrap();
        assert_eq!(out.len(), 3);
        let prior = evolve_state(&init, &h);
        let post = update_state(&prior, &h, &series.records[0]).unwrap();
        assert_eq!(out[0].prior, prior);
        assert_eq!(out[0].posterior, post);
        assert_eq!(out[1].prior, evolve_state(&post, &h));
        assert!(run_filter(&ObservationSeries::from_rows(vec![]).unwrap(), &h, &init).is_err());
    }

    #[test]
    fn run_filter_reports_bad_index() {
        let series = ObservationSeries::from_rows(vec![vec![1.2], vec![-0.7]]).unwrap();
        let err = run_filter(&series, &hp(1.0, 0.7), &GammaState { a: 2.0, b: 2.0 }).unwrap_err();
        assert!(err.to_string().contains("t=2"));
    }

    #[test]
    fn default_init_matches_first_observation() {
        let series = ObservationSeries::from_rows(vec![vec![4.0]]).unwrap();
        let init = default_init(&series, &hp(2.0, 0.7)).unwrap();
        assert_eq!(init.a, 2.5);
        assert!((init.mean() - 0.5).abs() < 1e-15);
    }
}
