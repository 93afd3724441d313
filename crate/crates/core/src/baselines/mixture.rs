use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::static_fit::{gamma_shape_from_s, MIN_FIT_OBS};
use crate::dist::gamma_logpdf_unchecked;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub restarts: usize,
    /// Relative log-likelihood change that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            tol: 1e-10,
            max_iter: 2000,
        }
    }
}

/// A `K`-component Gamma mixture, components ordered by ascending mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub k: usize,
    pub weights: Vec<f64>,
    pub shapes: Vec<f64>,
    pub rates: Vec<f64>,
    pub loglik: f64,
    /// BIC with `3K - 1` free parameters.
    pub bic: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Log likelihood after every EM iteration of the winning restart.
    pub loglik_trace: Vec<f64>,
}

impl MixtureFit {
    pub fn means(&self) -> Vec<f64> {
        self.shapes.iter().zip(&self.rates).map(|(a, b)| a / b).collect()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

struct Params {
    weights: Vec<f64>,
    shapes: Vec<f64>,
    rates: Vec<f64>,
}

/// Weighted Gamma MLE for every component given responsibilities.
fn m_step(data: &[f64], logs: &[f64], resp: &[Vec<f64>]) -> Result<Params> {
    let k = resp[0].len();
    let n = data.len() as f64;
    let mut p = Params {
        weights: Vec::with_capacity(k),
        shapes: Vec::with_capacity(k),
        rates: Vec::with_capacity(k),
    };
    for c in 0..k {
        let (mut nk, mut sx, mut slog) = (0.0, 0.0, 0.0);
        for ((x, l), r) in data.iter().zip(logs).zip(resp) {
            nk += r[c];
            sx += r[c] * x;
            slog += r[c] * l;
        }
        if nk < 1e-8 * n {
            return Err(Error::Numeric(format!("mixture component {c} is empty")));
        }
        let mean = sx / nk;
        let shape = gamma_shape_from_s(mean.ln() - slog / nk)?;
        p.weights.push(nk / n);
        p.shapes.push(shape);
        p.rates.push(shape / mean);
    }
    Ok(p)
}

/// E-step: log-space responsibilities; returns the log likelihood.
fn e_step(data: &[f64], p: &Params, resp: &mut [Vec<f64>]) -> f64 {
    let k = p.weights.len();
    let mut ll = 0.0;
    let mut buf = vec![0.0; k];
    for (x, r) in data.iter().zip(resp.iter_mut()) {
        for c in 0..k {
            buf[c] = p.weights[c].ln() + gamma_logpdf_unchecked(p.shapes[c], p.rates[c], *x);
        }
        let lse = log_sum_exp(&buf);
        ll += lse;
        for c in 0..k {
            r[c] = (buf[c] - lse).exp();
        }
    }
    ll
}

fn run_em(data: &[f64], logs: &[f64], init_resp: Vec<Vec<f64>>, config: &MixtureConfig) -> Result<MixtureFit> {
    let mut resp = init_resp;
    let mut trace = Vec::new();
    let mut params = m_step(data, logs, &resp)?;
    let mut converged = false;
    for _ in 0..config.max_iter {
        let ll = e_step(data, &params, &mut resp);
        if !ll.is_finite() {
            return Err(Error::Numeric("mixture log likelihood is not finite".into()));
        }
        let prev = trace.last().copied();
        trace.push(ll);
        if let Some(prev) = prev {
            if (ll - prev).abs() <= config.tol * (1.0 + ll.abs()) {
                converged = true;
                break;
            }
        }
        params = m_step(data, logs, &resp)?;
    }
    let k = params.weights.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| (params.shapes[i] / params.rates[i]).total_cmp(&(params.shapes[j] / params.rates[j])));
    let loglik = *trace.last().expect("at least one iteration");
    Ok(MixtureFit {
        k,
        weights: order.iter().map(|&i| params.weights[i]).collect(),
        shapes: order.iter().map(|&i| params.shapes[i]).collect(),
        rates: order.iter().map(|&i| params.rates[i]).collect(),
        loglik,
        bic: (3 * k - 1) as f64 * (data.len() as f64).ln() - 2.0 * loglik,
        converged,
        iterations: trace.len(),
        loglik_trace: trace,
    })
}

/// Hard assignment to the nearest of `centers`, as one-hot responsibilities.
fn nearest_resp(data: &[f64], centers: &[f64]) -> Vec<Vec<f64>> {
    data.iter()
        .map(|x| {
            let best = (0..centers.len())
                .min_by(|&i, &j| (x - centers[i]).abs().total_cmp(&(x - centers[j]).abs()))
                .unwrap_or(0);
            (0..centers.len()).map(|c| f64::from(u8::from(c == best))).collect()
        })
        .collect()
}

/// Fit a `K`-component Gamma mixture by EM. The first restart starts from
/// equal-count quantile groups, the rest from randomly chosen centres; the
/// restart with the highest likelihood wins.
pub fn fit_gamma_mixture<R: Rng + ?Sized>(data: &[f64], k: usize, config: &MixtureConfig, rng: &mut R) -> Result<MixtureFit> {
    if k == 0 {
        return Err(Error::Config("mixture needs at least one component".into()));
    }
    if data.len() < MIN_FIT_OBS * k {
        return Err(Error::Data(format!("need at least {} observations for {k} components, got {}", MIN_FIT_OBS * k, data.len())));
    }
    if let Some(v) = data.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Data(format!("mixture data must be positive, got {v}")));
    }
    if config.restarts == 0 || config.max_iter == 0 {
        return Err(Error::Config("restarts and max_iter must be positive".into()));
    }
    let logs: Vec<f64> = data.iter().map(|v| v.ln()).collect();
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut starts = Vec::with_capacity(config.restarts);
    let quantile_centers: Vec<f64> = (0..k).map(|c| sorted[((2 * c + 1) * sorted.len()) / (2 * k)]).collect();
    starts.push(quantile_centers);
    while starts.len() < config.restarts {
        let mut centers: Vec<f64> = (0..k).map(|_| data[rng.random_range(0..data.len())]).collect();
        centers.sort_by(f64::total_cmp);
        starts.push(centers);
    }
    let fits: Vec<Result<MixtureFit>> = starts.par_iter().map(|c| run_em(data, &logs, nearest_resp(data, c), config)).collect();
    let mut best: Option<MixtureFit> = None;
    let mut last_err = None;
    for f in fits {
        match f {
            Ok(f) if best.as_ref().is_none_or(|b| f.loglik > b.loglik) => best = Some(f),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Numeric("no mixture restart succeeded".into())))
}
