use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::{effective_sample_size, split_rhat};
use super::ffbs::{backward_sample, draw_lambdas_with, exponents, forward_posteriors, log_marginal_with, metropolis_decide, renormalize, GammaStepConfig};
use super::LambdaPrior;
use crate::corridor::{calibrate_lambdas, CorridorModel};
use crate::dist::{self, gamma_logpdf_unchecked};
use crate::env_filter::{GammaState, HyperParams, ObservationSeries};
use crate::error::{Error, Result};
use crate::route::{empirical_quantile, moment_match_lambdas};

/// Sampler settings. Defaults are four chains of 10,000 sweeps, 2,000 burn-in,
/// keeping every second draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub chains: usize,
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Sample `gamma` by Metropolis when set; otherwise it stays at `hyper.gamma`.
    pub gamma_step: Option<GammaStepConfig>,
    /// Log-scale jitter applied to the calibrated rates to start each chain.
    pub init_jitter: f64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            iters: 10_000,
            burn_in: 2_000,
            thin: 2,
            seed: 0,
            gamma_step: None,
            init_jitter: 0.3,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.thin == 0 {
            return Err(Error::Config("chains and thin must be positive".into()));
        }
        if self.burn_in >= self.iters {
            return Err(Error::Config(format!("burn-in {} must be below iterations {}", self.burn_in, self.iters)));
        }
        if !(self.init_jitter >= 0.0 && self.init_jitter.is_finite()) {
            return Err(Error::Config(format!("init jitter must be nonnegative, got {}", self.init_jitter)));
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.iters - self.burn_in).div_ceil(self.thin)
    }

    pub fn retained_total(&self) -> usize {
        self.chains * self.retained_per_chain()
    }
}

/// One retained sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsDraw {
    pub iter: usize,
    pub eta_path: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub gamma: f64,
    /// Observation log likelihood plus the rate log prior.
    pub log_joint: f64,
}

/// Posterior summary of a scalar: mean, SD, central 95% interval, diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub rhat: f64,
    pub ess: f64,
}

impl ParamSummary {
    pub fn from_chains(name: impl Into<String>, chains: &[Vec<f64>]) -> Self {
        let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
        let n = pooled.len() as f64;
        let mean = pooled.iter().sum::<f64>() / n;
        let sd = (pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        pooled.sort_by(f64::total_cmp);
        Self {
            name: name.into(),
            mean,
            sd,
            lower: empirical_quantile(&pooled, 0.025),
            upper: empirical_quantile(&pooled, 0.975),
            rhat: split_rhat(chains),
            ess: effective_sample_size(chains),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsOutput {
    pub segment_ids: Vec<String>,
    pub chains: Vec<Vec<GibbsDraw>>,
    pub lambdas: Vec<ParamSummary>,
    pub alpha_star: ParamSummary,
    pub gamma: Option<ParamSummary>,
    /// Metropolis acceptance rate per chain, when `gamma` is sampled.
    pub gamma_acceptance: Option<Vec<f64>>,
    pub max_rhat: f64,
    pub min_ess: f64,
}

impl GibbsOutput {
    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    /// Per-chain traces of `lambda_j`.
    pub fn lambda_traces(&self, j: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.iter().map(|d| d.lambdas[j]).collect()).collect()
    }
}

fn log_joint(series: &ObservationSeries, s: &[f64], alpha: f64, eta: &[f64], lambdas: &[f64], prior: &LambdaPrior) -> f64 {
    let mut acc = 0.0;
    for ((rec, e), st) in series.records.iter().zip(eta).zip(s) {
        let scale = e * st.exp();
        for (l, y) in lambdas.iter().zip(&rec.y) {
            acc += gamma_logpdf_unchecked(alpha, l * scale, *y);
        }
    }
    for ((l, r), q) in lambdas.iter().zip(&prior.r0).zip(&prior.q0) {
        acc += gamma_logpdf_unchecked(*r, *q, *l);
    }
    acc
}

fn init_state(series: &ObservationSeries, s: &[f64], alpha: f64, lambdas: &[f64]) -> Result<GammaState> {
    let first = &series.records[0];
    let weighted: f64 = lambdas.iter().zip(&first.y).map(|(l, v)| l * v).sum();
    GammaState::weak_prior(lambdas.len() as f64 * alpha / (s[0].exp() * weighted))
}

struct ChainResult {
    draws: Vec<GibbsDraw>,
    accepted: usize,
}

fn run_chain(
    series: &ObservationSeries,
    s: &[f64],
    hyper: &HyperParams,
    prior: &LambdaPrior,
    start: &[f64],
    config: &GibbsConfig,
    chain: usize,
) -> Result<ChainResult> {
    let mut rng = crate::seeded_rng(config.seed);
    rng.set_stream(chain as u64);
    let mut lambdas: Vec<f64> = start
        .iter()
        .map(|l| {
            let z: f64 = StandardNormal.sample(&mut rng);
            l * (config.init_jitter * z).exp()
        })
        .collect();
    renormalize(&mut lambdas, &mut []);
    let mut gamma = hyper.gamma;
    let mut accepted = 0;
    let mut draws = Vec::with_capacity(config.retained_per_chain());
    for iter in 0..config.iters {
        let init = init_state(series, s, hyper.alpha, &lambdas)?;
        let post = forward_posteriors(series, s, hyper.alpha, gamma, &lambdas, &init);
        let mut eta = backward_sample(&post, gamma, &mut rng).map_err(|e| Error::Numeric(format!("chain {chain}, iteration {iter}: {e}")))?;
        lambdas = draw_lambdas_with(&eta, series, s, hyper.alpha, prior, &mut rng);
        renormalize(&mut lambdas, &mut eta);
        if let Some(step) = &config.gamma_step {
            let init = init_state(series, s, hyper.alpha, &lambdas)?;
            let proposal = dist::beta_sample(step.concentration * gamma, step.concentration * (1.0 - gamma), &mut rng)?;
            let u: f64 = rng.random();
            let (g, acc) = metropolis_decide(gamma, proposal, u, step, |g| log_marginal_with(series, s, hyper.alpha, g, &lambdas, &init));
            gamma = g;
            accepted += usize::from(acc);
        }
        if iter >= config.burn_in && (iter - config.burn_in) % config.thin == 0 {
            let lj = log_joint(series, s, hyper.alpha, &eta, &lambdas, prior);
            if !lj.is_finite() {
                return Err(Error::Numeric(format!("chain {chain}, iteration {iter}: log joint is {lj}")));
            }
            draws.push(GibbsDraw {
                iter,
                eta_path: eta,
                lambdas: lambdas.clone(),
                gamma,
                log_joint: lj,
            });
        }
    }
    Ok(ChainResult { draws, accepted })
}

/// Run independent chains in parallel. Each chain has its own random stream
/// derived from `config.seed`, so results do not depend on thread count.
pub fn run_gibbs(series: &ObservationSeries, hyper: &HyperParams, prior: &LambdaPrior, config: &GibbsConfig) -> Result<GibbsOutput> {
    config.validate()?;
    if series.is_empty() {
        return Err(Error::Data("cannot sample from an empty series".into()));
    }
    if prior.len() != series.num_segments() {
        return Err(Error::Shape {
            what: "lambda prior",
            expected: series.num_segments(),
            got: prior.len(),
        });
    }
    for r in &series.records {
        crate::env_filter::check_positive(r.t, &r.y, Some(&series.segment_ids))?;
    }
    let s = exponents(series, hyper)?;
    let start: CorridorModel = calibrate_lambdas(series)?;
    let results: Vec<Result<ChainResult>> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(series, &s, hyper, prior, start.lambdas(), config, c))
        .collect();
    let mut chains = Vec::with_capacity(config.chains);
    let mut acceptance = Vec::with_capacity(config.chains);
    for r in results {
        let r = r?;
        acceptance.push(r.accepted as f64 / config.iters as f64);
        chains.push(r.draws);
    }
    let m = series.num_segments();
    let traces = |f: &dyn Fn(&GibbsDraw) -> f64| -> Vec<Vec<f64>> { chains.iter().map(|c| c.iter().map(f).collect()).collect() };
    let lambdas: Vec<ParamSummary> = (0..m)
        .map(|j| ParamSummary::from_chains(format!("lambda_{}", series.segment_ids[j]), &traces(&|d| d.lambdas[j])))
        .collect();
    let alpha_star = ParamSummary::from_chains("alpha_star", &traces(&|d| moment_match_lambdas(hyper.alpha, &d.lambdas).0));
    let gamma = config.gamma_step.map(|_| ParamSummary::from_chains("gamma", &traces(&|d| d.gamma)));
    let mut max_rhat = lambdas.iter().map(|p| p.rhat).fold(f64::NEG_INFINITY, f64::max);
    let mut min_ess = lambdas.iter().map(|p| p.ess).fold(f64::INFINITY, f64::min);
    if let Some(g) = &gamma {
        max_rhat = max_rhat.max(g.rhat);
        min_ess = min_ess.min(g.ess);
    }
    Ok(GibbsOutput {
        segment_ids: series.segment_ids.clone(),
        chains,
        lambdas,
        alpha_star,
        gamma,
        gamma_acceptance: config.gamma_step.map(|_| acceptance),
        max_rhat,
        min_ess,
    })
}
