//! Predictive calibration and the empirical-Bayes grid over `(alpha, gamma)`.
//!
//! Evaluation is driven through [`Forecaster`]: the harness asks for a
//! forecast of period `t` and only then reveals the record of period `t`, so a
//! forecaster cannot see data it should not.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corridor::{self, calibrate_lambdas, default_init_mv, CorridorModel};
use crate::dist;
use crate::env_filter::{self, evolve_state, GammaState, HyperParams, ObservationRecord, ObservationSeries};
use crate::error::{domain, Error, Result};
use crate::route::{self, moment_match, RoutePredictive};

/// Nominal level of the reported predictive intervals.
pub const COVERAGE_LEVEL: f64 = 0.9;

/// Default `alpha` grid.
pub const DEFAULT_ALPHA_GRID: [f64; 8] = [0.5, 0.7, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0];
/// Default `gamma` grid.
pub const DEFAULT_GAMMA_GRID: [f64; 11] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.99];

/// A univariate predictive law of route travel time.
pub trait RouteLaw {
    fn cdf(&self, x: f64) -> Result<f64>;
    fn quantile(&self, q: f64) -> Result<f64>;
    fn log_density(&self, x: f64) -> Result<f64>;
}

impl RouteLaw for RoutePredictive {
    fn cdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        route::route_cdf(self, x)
    }
    fn quantile(&self, q: f64) -> Result<f64> {
        route::route_quantile(self, q)
    }
    fn log_density(&self, x: f64) -> Result<f64> {
        route::route_logpdf(self, x)
    }
}

/// Compound-Gamma predictive of a single series.
#[derive(Debug, Clone)]
pub struct UnivariatePredictive {
    pub prior: GammaState,
    pub hyper: HyperParams,
    pub u: Vec<f64>,
}

impl RouteLaw for UnivariatePredictive {
    fn cdf(&self, x: f64) -> Result<f64> {
        env_filter::predictive_cdf(&self.prior, &self.hyper, x.max(0.0), &self.u)
    }
    fn quantile(&self, q: f64) -> Result<f64> {
        env_filter::predictive_quantile(&self.prior, &self.hyper, q, &self.u)
    }
    fn log_density(&self, x: f64) -> Result<f64> {
        env_filter::predictive_logpdf(&self.prior, &self.hyper, x, &self.u)
    }
}

/// One-step-ahead forecaster of the route total.
pub trait Forecaster {
    /// Predictive law of the next route total, given the next period's covariates.
    fn forecast(&mut self, covariates: &[f64]) -> Result<Box<dyn RouteLaw + '_>>;
    /// Reveal the next record; returns the forecaster's own log predictive score for it.
    fn observe(&mut self, record: &ObservationRecord) -> Result<f64>;
}

/// The corridor filter with route predictive via moment matching. The score
/// returned by `observe` is the joint predictive log density of all segments.
#[derive(Debug, Clone)]
pub struct CorridorForecaster {
    pub hyper: HyperParams,
    pub model: CorridorModel,
    pub state: GammaState,
    alpha_star: f64,
    c: f64,
}

impl CorridorForecaster {
    pub fn new(hyper: HyperParams, model: CorridorModel, init: GammaState) -> Self {
        let (alpha_star, c) = moment_match(&hyper, &model);
        Self {
            hyper,
            model,
            state: init,
            alpha_star,
            c,
        }
    }

    pub fn prior(&self) -> GammaState {
        evolve_state(&self.state, &self.hyper)
    }

    pub fn route_predictive(&self, covariates: &[f64]) -> Result<RoutePredictive> {
        let prior = self.prior();
        let s = self.hyper.covariate_exponent(covariates)?;
        RoutePredictive::new(self.alpha_star, self.c, prior.a, prior.b * (-s).exp())
    }
}

impl Forecaster for CorridorForecaster {
    fn forecast(&mut self, covariates: &[f64]) -> Result<Box<dyn RouteLaw + '_>> {
        Ok(Box::new(self.route_predictive(covariates)?))
    }

    fn observe(&mut self, record: &ObservationRecord) -> Result<f64> {
        let prior = self.prior();
        let score = corridor::joint_predictive_logpdf(&prior, &self.hyper, &self.model, &record.y, &record.u)?;
        self.state = corridor::update_state_mv(&prior, &self.hyper, &self.model, record)?;
        Ok(score)
    }
}

/// The univariate filter applied directly to route totals.
#[derive(Debug, Clone)]
pub struct RouteUnivariateForecaster {
    pub hyper: HyperParams,
    pub state: GammaState,
}

impl Forecaster for RouteUnivariateForecaster {
    fn forecast(&mut self, covariates: &[f64]) -> Result<Box<dyn RouteLaw + '_>> {
        Ok(Box::new(UnivariatePredictive {
            prior: evolve_state(&self.state, &self.hyper),
            hyper: self.hyper.clone(),
            u: covariates.to_vec(),
        }))
    }

    fn observe(&mut self, record: &ObservationRecord) -> Result<f64> {
        let prior = evolve_state(&self.state, &self.hyper);
        let total = record.route_total();
        let route_rec = ObservationRecord {
            t: record.t,
            y: vec![total],
            u: record.u.clone(),
            timestamp: None,
        };
        let score = env_filter::predictive_logpdf(&prior, &self.hyper, total, &record.u)?;
        self.state = env_filter::update_state(&prior, &self.hyper, &route_rec)?;
        Ok(score)
    }
}

/// A forecaster that always returns the same law.
pub struct StaticForecaster<L: RouteLaw>(pub L);

impl<L: RouteLaw> Forecaster for StaticForecaster<L> {
    fn forecast(&mut self, _covariates: &[f64]) -> Result<Box<dyn RouteLaw + '_>> {
        Ok(Box::new(Ref(&self.0)))
    }
    fn observe(&mut self, record: &ObservationRecord) -> Result<f64> {
        self.0.log_density(record.route_total())
    }
}

struct Ref<'a, L: RouteLaw>(&'a L);

impl<L: RouteLaw> RouteLaw for Ref<'_, L> {
    fn cdf(&self, x: f64) -> Result<f64> {
        self.0.cdf(x)
    }
    fn quantile(&self, q: f64) -> Result<f64> {
        self.0.quantile(q)
    }
    fn log_density(&self, x: f64) -> Result<f64> {
        self.0.log_density(x)
    }
}

fn with_time(t: usize, e: Error) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("t={t}: {m}")),
        Error::Domain { func, detail } => Error::Domain {
            func,
            detail: format!("t={t}: {detail}"),
        },
        other => other,
    }
}

/// PIT values `P(S_t <= s_t | D^{t-1})` for every period after `burn_in`.
pub fn pit_series<F: Forecaster + ?Sized>(forecaster: &mut F, series: &ObservationSeries, burn_in: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(series.len().saturating_sub(burn_in));
    for (i, rec) in series.records.iter().enumerate() {
        if i >= burn_in {
            let law = forecaster.forecast(&rec.u).map_err(|e| with_time(rec.t, e))?;
            out.push(law.cdf(rec.route_total()).map_err(|e| with_time(rec.t, e))?);
        }
        forecaster.observe(rec).map_err(|e| with_time(rec.t, e))?;
    }
    Ok(out)
}

/// Fraction of route totals inside the central `level` interval, and its mean width.
pub fn coverage_and_width<F: Forecaster + ?Sized>(
    forecaster: &mut F,
    series: &ObservationSeries,
    level: f64,
    burn_in: usize,
) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(domain("coverage_and_width", format!("level must lie in (0, 1), got {level}")));
    }
    let (lo_q, hi_q) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    let (mut hits, mut n, mut width) = (0usize, 0usize, 0.0);
    for (i, rec) in series.records.iter().enumerate() {
        if i >= burn_in {
            let law = forecaster.forecast(&rec.u).map_err(|e| with_time(rec.t, e))?;
            let lo = law.quantile(lo_q).map_err(|e| with_time(rec.t, e))?;
            let hi = law.quantile(hi_q).map_err(|e| with_time(rec.t, e))?;
            let s = rec.route_total();
            hits += usize::from(s >= lo && s <= hi);
            width += hi - lo;
            n += 1;
        }
        forecaster.observe(rec).map_err(|e| with_time(rec.t, e))?;
    }
    if n == 0 {
        return Err(Error::Data(format!("no evaluation points after burn-in {burn_in}")));
    }
    Ok((hits as f64 / n as f64, width / n as f64))
}

/// One-sample KS test against U(0, 1) with the asymptotic Kolmogorov p-value.
pub fn ks_uniform_test(pit: &[f64]) -> Result<(f64, f64)> {
    if pit.is_empty() {
        return Err(domain("ks_uniform_test", "no values"));
    }
    if let Some(v) = pit.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(domain("ks_uniform_test", format!("values must lie in [0, 1], got {v}")));
    }
    let mut sorted = pit.to_vec();
    sorted.sort_by(f64::total_cmp);
    let stat = ks_statistic_sorted(&sorted, |x| x);
    Ok((stat, dist::kolmogorov_sf((sorted.len() as f64).sqrt() * stat)))
}

/// Kolmogorov distance between the ECDF of `sorted` and `cdf`.
pub fn ks_statistic_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Ljung-Box portmanteau statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjungBox {
    pub q: f64,
    pub p: f64,
    pub lag1_autocorr: f64,
}

/// Sample autocorrelation at `lag`.
pub fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let denom: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if denom == 0.0 || lag >= n {
        return 0.0;
    }
    let num: f64 = (0..n - lag).map(|t| (x[t] - mean) * (x[t + lag] - mean)).sum();
    num / denom
}

pub fn ljung_box(x: &[f64], lags: usize) -> Result<LjungBox> {
    let n = x.len();
    if lags == 0 || n <= lags {
        return Err(domain("ljung_box", format!("need 0 < lags < n, got lags {lags}, n {n}")));
    }
    let nf = n as f64;
    let q = nf
        * (nf + 2.0)
        * (1..=lags).map(|k| autocorrelation(x, k).powi(2) / (nf - k as f64)).sum::<f64>();
    Ok(LjungBox {
        q,
        p: dist::chi_square_sf(q, lags as f64),
        lag1_autocorr: autocorrelation(x, 1),
    })
}

/// Calibration summary of a forecaster over a series.
///
/// The KS p-value treats PIT values as independent; the Ljung-Box fields are
/// always reported next to it because sequential PITs usually are not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub pit: Vec<f64>,
    pub ks_stat: f64,
    pub ks_p: f64,
    pub coverage90: f64,
    pub mean_iw90: f64,
    pub log_pred_lik: f64,
    pub lag1_autocorr: f64,
    pub ljung_box_q: f64,
    pub ljung_box_p: f64,
    pub n_eval: usize,
}

/// Single pass computing PIT, 90% coverage and width, and the summed log score after `burn_in`.
pub fn evaluate<F: Forecaster + ?Sized>(forecaster: &mut F, series: &ObservationSeries, burn_in: usize) -> Result<CalibrationReport> {
    let (lo_q, hi_q) = ((1.0 - COVERAGE_LEVEL) / 2.0, (1.0 + COVERAGE_LEVEL) / 2.0);
    let mut pit = Vec::new();
    let (mut hits, mut width, mut loglik) = (0usize, 0.0, 0.0);
    for (i, rec) in series.records.iter().enumerate() {
        if i >= burn_in {
            let law = forecaster.forecast(&rec.u).map_err(|e| with_time(rec.t, e))?;
            let s = rec.route_total();
            pit.push(law.cdf(s).map_err(|e| with_time(rec.t, e))?);
            let lo = law.quantile(lo_q).map_err(|e| with_time(rec.t, e))?;
            let hi = law.quantile(hi_q).map_err(|e| with_time(rec.t, e))?;
            hits += usize::from(s >= lo && s <= hi);
            width += hi - lo;
        }
        let score = forecaster.observe(rec).map_err(|e| with_time(rec.t, e))?;
        if i >= burn_in {
            loglik += score;
        }
    }
    let n_eval = pit.len();
    if n_eval < 2 {
        return Err(Error::Data(format!("need at least 2 evaluation points after burn-in {burn_in}, got {n_eval}")));
    }
    let (ks_stat, ks_p) = ks_uniform_test(&pit)?;
    let lb = ljung_box(&pit, 1)?;
    Ok(CalibrationReport {
        ks_stat,
        ks_p,
        coverage90: hits as f64 / n_eval as f64,
        mean_iw90: width / n_eval as f64,
        log_pred_lik: loglik,
        lag1_autocorr: lb.lag1_autocorr,
        ljung_box_q: lb.q,
        ljung_box_p: lb.p,
        n_eval,
        pit,
    })
}

/// Which model the grid search evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridMode {
    /// Univariate filter on the route totals.
    UnivariateRoute,
    /// Corridor filter on segments, route predictive by moment matching.
    MultivariateRoute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub alpha: f64,
    pub gamma: f64,
    pub report: CalibrationReport,
    pub alpha_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFailure {
    pub alpha: f64,
    pub gamma: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub mode: GridMode,
    pub cells: Vec<GridCell>,
    pub failures: Vec<GridFailure>,
    /// Index into `cells` of the selected cell.
    pub selected: Option<usize>,
}

impl GridSearchResult {
    pub fn selected_cell(&self) -> Option<&GridCell> {
        self.selected.map(|i| &self.cells[i])
    }
}

/// Evaluate one `(alpha, gamma)` cell.
pub fn evaluate_cell(series: &ObservationSeries, hyper: &HyperParams, mode: GridMode, model: Option<&CorridorModel>, burn_in: usize) -> Result<GridCell> {
    match mode {
        GridMode::UnivariateRoute => {
            let route = series.route_series();
            let init = env_filter::default_init(&route, hyper)?;
            let mut f = RouteUnivariateForecaster {
                hyper: hyper.clone(),
                state: init,
            };
            Ok(GridCell {
                alpha: hyper.alpha,
                gamma: hyper.gamma,
                report: evaluate(&mut f, series, burn_in)?,
                alpha_star: hyper.alpha,
            })
        }
        GridMode::MultivariateRoute => {
            let owned;
            let model = match model {
                Some(m) => m,
                None => {
                    owned = calibrate_lambdas(series)?;
                    &owned
                }
            };
            let init = default_init_mv(series, hyper, model)?;
            let mut f = CorridorForecaster::new(hyper.clone(), model.clone(), init);
            let alpha_star = moment_match(hyper, model).0;
            Ok(GridCell {
                alpha: hyper.alpha,
                gamma: hyper.gamma,
                report: evaluate(&mut f, series, burn_in)?,
                alpha_star,
            })
        }
    }
}

/// Rank two cells: higher KS p, then higher log predictive likelihood, then smaller gamma.
fn better(a: &GridCell, b: &GridCell) -> bool {
    use std::cmp::Ordering::*;
    match a.report.ks_p.total_cmp(&b.report.ks_p) {
        Greater => true,
        Less => false,
        Equal => match a.report.log_pred_lik.total_cmp(&b.report.log_pred_lik) {
            Greater => true,
            Less => false,
            Equal => a.gamma < b.gamma,
        },
    }
}

/// Evaluate every `(alpha, gamma)` pair; cells run in parallel and are
/// returned in grid order (alpha outer, gamma inner). Failing cells are
/// recorded and skipped.
pub fn grid_search(
    series: &ObservationSeries,
    alpha_grid: &[f64],
    gamma_grid: &[f64],
    mode: GridMode,
    burn_in: usize,
) -> Result<GridSearchResult> {
    if alpha_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::Config("grids must be nonempty".into()));
    }
    let model = match mode {
        GridMode::MultivariateRoute => Some(calibrate_lambdas(series)?),
        GridMode::UnivariateRoute => None,
    };
    let pairs: Vec<(f64, f64)> = alpha_grid.iter().flat_map(|&a| gamma_grid.iter().map(move |&g| (a, g))).collect();
    let results: Vec<std::result::Result<GridCell, GridFailure>> = pairs
        .par_iter()
        .map(|&(alpha, gamma)| {
            HyperParams::new(alpha, gamma)
                .and_then(|h| evaluate_cell(series, &h, mode, model.as_ref(), burn_in))
                .map_err(|e| GridFailure {
                    alpha,
                    gamma,
                    error: e.to_string(),
                })
        })
        .collect();
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(c) => cells.push(c),
            Err(f) => failures.push(f),
        }
    }
    let mut selected: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        if selected.is_none_or(|s| better(c, &cells[s])) {
            selected = Some(i);
        }
    }
    Ok(GridSearchResult {
        mode,
        cells,
        failures,
        selected,
    })
}
