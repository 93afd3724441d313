//! Multi-segment model: segment `j` at time `t` is `Gam(alpha, lambda_j eta_t e^{beta.u_t})`
//! with one environment shared by the whole corridor.

use serde::{Deserialize, Serialize};

use crate::dist;
use crate::env_filter::{check_positive, evolve_state, FilterStep, GammaState, HyperParams, ObservationRecord, ObservationSeries};
use crate::error::{Error, Result};

/// Segment rates and geometry of a corridor.
///
/// Rates are only identified up to a common factor (the environment absorbs
/// it), so [`CorridorModel::new`] rescales them to unit mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorModel {
    lambdas: Vec<f64>,
    /// Segment lengths in miles; empty when unknown (e.g. simulated corridors).
    distances: Vec<f64>,
    segment_ids: Vec<String>,
}

impl CorridorModel {
    /// Build a corridor, normalizing the rates to unit mean.
    pub fn new(lambdas: Vec<f64>, distances: Vec<f64>, segment_ids: Vec<String>) -> Result<Self> {
        let mut model = Self::unnormalized(lambdas, distances, segment_ids)?;
        let mean = model.lambdas.iter().sum::<f64>() / model.lambdas.len() as f64;
        for l in &mut model.lambdas {
            *l /= mean;
        }
        Ok(model)
    }

    /// Build a corridor keeping the rates exactly as given.
    pub fn unnormalized(lambdas: Vec<f64>, distances: Vec<f64>, segment_ids: Vec<String>) -> Result<Self> {
        let m = lambdas.len();
        if m == 0 {
            return Err(Error::Config("a corridor needs at least one segment".into()));
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("segment rates must be positive, got {l}")));
        }
        if !distances.is_empty() && distances.len() != m {
            return Err(Error::Shape {
                what: "distances",
                expected: m,
                got: distances.len(),
            });
        }
        if let Some(d) = distances.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::Config(format!("segment distances must be positive, got {d}")));
        }
        if segment_ids.len() != m {
            return Err(Error::Shape {
                what: "segment ids",
                expected: m,
                got: segment_ids.len(),
            });
        }
        Ok(Self {
            lambdas,
            distances,
            segment_ids,
        })
    }

    /// Corridor of `m` identical segments.
    pub fn homogeneous(m: usize) -> Result<Self> {
        Self::new(vec![1.0; m], Vec::new(), (1..=m).map(|j| format!("seg{j}")).collect())
    }

    pub fn from_lambdas(lambdas: Vec<f64>) -> Result<Self> {
        let ids = (1..=lambdas.len()).map(|j| format!("seg{j}")).collect();
        Self::new(lambdas, Vec::new(), ids)
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn segment_ids(&self) -> &[String] {
        &self.segment_ids
    }

    pub fn num_segments(&self) -> usize {
        self.lambdas.len()
    }

    pub fn total_distance(&self) -> f64 {
        self.distances.iter().sum()
    }

    pub fn with_distances(mut self, distances: Vec<f64>) -> Result<Self> {
        Self::unnormalized(self.lambdas.clone(), distances.clone(), self.segment_ids.clone())?;
        self.distances = distances;
        Ok(self)
    }

    fn check_obs(&self, obs: &ObservationRecord) -> Result<()> {
        if obs.y.len() != self.lambdas.len() {
            return Err(Error::Shape {
                what: "segment observation",
                expected: self.lambdas.len(),
                got: obs.y.len(),
            });
        }
        check_positive(obs.t, &obs.y, Some(&self.segment_ids))
    }

    /// `sum_j lambda_j y_j`.
    pub fn weighted_sum(&self, y: &[f64]) -> f64 {
        self.lambdas.iter().zip(y).map(|(l, v)| l * v).sum()
    }
}

/// Conjugate update with all `m` segments: shape gains `m alpha`, rate gains
/// `e^{beta.u} sum_j lambda_j y_j`.
pub fn update_state_mv(
    prior: &GammaState,
    hyper: &HyperParams,
    model: &CorridorModel,
    obs: &ObservationRecord,
) -> Result<GammaState> {
    model.check_obs(obs)?;
    let s = hyper.covariate_exponent(&obs.u)?;
    Ok(GammaState {
        a: prior.a + model.num_segments() as f64 * hyper.alpha,
        b: prior.b + s.exp() * model.weighted_sum(&obs.y),
    })
}

/// Log of the multivariate compound-Gamma joint predictive density.
pub fn joint_predictive_logpdf(
    prior: &GammaState,
    hyper: &HyperParams,
    model: &CorridorModel,
    y: &[f64],
    u: &[f64],
) -> Result<f64> {
    if y.len() != model.num_segments() {
        return Err(Error::Shape {
            what: "segment observation",
            expected: model.num_segments(),
            got: y.len(),
        });
    }
    check_positive(0, y, Some(model.segment_ids()))?;
    let s = hyper.covariate_exponent(u)?;
    Ok(joint_logpdf_unchecked(prior, hyper.alpha, model.lambdas(), y, s))
}

pub(crate) fn joint_logpdf_unchecked(prior: &GammaState, alpha: f64, lambdas: &[f64], y: &[f64], s: f64) -> f64 {
    let m = lambdas.len() as f64;
    let (a, b) = (prior.a, prior.b);
    let mut acc = dist::ln_gamma(m * alpha + a) - m * dist::ln_gamma(alpha) - dist::ln_gamma(a) + a * b.ln();
    let mut weighted = 0.0;
    for (l, v) in lambdas.iter().zip(y) {
        acc += alpha * (l.ln() + s) + (alpha - 1.0) * v.ln();
        weighted += l * v;
    }
    acc - (m * alpha + a) * (b + s.exp() * weighted).ln()
}

/// Pairwise predictive correlation between any two segments, `alpha / (alpha + a - 1)`.
/// `None` when the prior shape is at most 2 (infinite predictive variance).
pub fn predictive_correlation(prior: &GammaState, hyper: &HyperParams) -> Option<f64> {
    (prior.a > 2.0).then(|| hyper.alpha / (hyper.alpha + prior.a - 1.0))
}

/// Default initial state for a corridor: shape 2.5 centred on the environment
/// implied by the first record, `m alpha / (e^{beta.u} sum_j lambda_j y_j)`.
pub fn default_init_mv(series: &ObservationSeries, hyper: &HyperParams, model: &CorridorModel) -> Result<GammaState> {
    let first = series.records.first().ok_or_else(|| Error::Data("empty series".into()))?;
    model.check_obs(first)?;
    let s = hyper.covariate_exponent(&first.u)?;
    let eta_hat = model.num_segments() as f64 * hyper.alpha / (s.exp() * model.weighted_sum(&first.y));
    GammaState::weak_prior(eta_hat)
}

/// Run the corridor filter; `log_pred` is the joint predictive log density.
pub fn run_filter_mv(
    series: &ObservationSeries,
    hyper: &HyperParams,
    model: &CorridorModel,
    init: &GammaState,
) -> Result<Vec<FilterStep>> {
    if series.is_empty() {
        return Err(Error::Data("cannot filter an empty series".into()));
    }
    let mut state = *init;
    let mut out = Vec::with_capacity(series.len());
    for rec in &series.records {
        let prior = evolve_state(&state, hyper);
        let posterior = update_state_mv(&prior, hyper, model, rec)?;
        let s = hyper.covariate_exponent(&rec.u)?;
        let log_pred = joint_logpdf_unchecked(&prior, hyper.alpha, model.lambdas(), &rec.y, s);
        out.push(FilterStep {
            prior,
            posterior,
            log_pred,
        });
        state = posterior;
    }
    Ok(out)
}

/// Segment rates proportional to the inverse segment means, rescaled to unit mean.
/// Non-finite entries are treated as missing.
pub fn calibrate_lambdas(series: &ObservationSeries) -> Result<CorridorModel> {
    let m = series.num_segments();
    if m == 0 {
        return Err(Error::Data("series has no segments".into()));
    }
    let complete = series.records.iter().filter(|r| r.y.iter().all(|v| v.is_finite())).count();
    if complete < 2 {
        return Err(Error::Data(format!("need at least 2 complete observations to calibrate, got {complete}")));
    }
    let mut inv_means = Vec::with_capacity(m);
    for j in 0..m {
        let vals: Vec<f64> = series.records.iter().map(|r| r.y[j]).filter(|v| v.is_finite()).collect();
        if vals.is_empty() {
            return Err(Error::Data(format!("segment {} has no observed data", series.segment_ids[j])));
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        if !(mean > 0.0) {
            return Err(Error::Data(format!("segment {} has nonpositive mean travel time", series.segment_ids[j])));
        }
        inv_means.push(1.0 / mean);
    }
    CorridorModel::new(inv_means, Vec::new(), series.segment_ids.clone())
}

/// Merge every segment shorter than `min_miles` into its downstream neighbour
/// (the last segment merges upstream). Travel times and distances add.
/// Returns the merged series and distances; rates must be recalibrated.
pub fn merge_short_segments(
    series: &ObservationSeries,
    distances: &[f64],
    min_miles: f64,
) -> Result<(ObservationSeries, Vec<f64>)> {
    let m = series.num_segments();
    if distances.len() != m {
        return Err(Error::Shape {
            what: "distances",
            expected: m,
            got: distances.len(),
        });
    }
    // groups[k] = indices merged into output segment k
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    for j in 0..m {
        pending.push(j);
        if distances[j] >= min_miles || j == m - 1 {
            groups.push(std::mem::take(&mut pending));
        }
    }
    if groups.len() > 1 {
        let last = groups.last().expect("nonempty");
        if last.iter().map(|&j| distances[j]).sum::<f64>() < min_miles {
            let tail = groups.pop().expect("nonempty");
            groups.last_mut().expect("nonempty").extend(tail);
        }
    }
    let ids = groups
        .iter()
        .map(|g| g.iter().map(|&j| series.segment_ids[j].as_str()).collect::<Vec<_>>().join("+"))
        .collect();
    let dists = groups.iter().map(|g| g.iter().map(|&j| distances[j]).sum()).collect();
    let records = series
        .records
        .iter()
        .map(|r| ObservationRecord {
            t: r.t,
            y: groups.iter().map(|g| g.iter().map(|&j| r.y[j]).sum()).collect(),
            u: r.u.clone(),
            timestamp: r.timestamp.clone(),
        })
        .collect();
    Ok((ObservationSeries::new(ids, records)?, dists))
}
