use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LambdaPrior;
use crate::corridor::{default_init_mv, joint_logpdf_unchecked, run_filter_mv, CorridorModel};
use crate::dist::{self, gamma_draw};
use crate::env_filter::{GammaState, HyperParams, ObservationSeries};
use crate::error::{domain, Error, Result};

/// Covariate exponent `beta.u_t` of every period.
pub(crate) fn exponents(series: &ObservationSeries, hyper: &HyperParams) -> Result<Vec<f64>> {
    series.records.iter().map(|r| hyper.covariate_exponent(&r.u)).collect()
}

fn check_complete(series: &ObservationSeries, m: usize) -> Result<()> {
    if series.num_segments() != m {
        return Err(Error::Shape {
            what: "segment count",
            expected: m,
            got: series.num_segments(),
        });
    }
    for r in &series.records {
        if r.y.len() != m {
            return Err(Error::Shape {
                what: "segment observation",
                expected: m,
                got: r.y.len(),
            });
        }
        crate::env_filter::check_positive(r.t, &r.y, Some(&series.segment_ids))?;
    }
    Ok(())
}

/// Filtering posteriors `(a_t, b_t)` for t = 1..T.
pub(crate) fn forward_posteriors(
    series: &ObservationSeries,
    s: &[f64],
    alpha: f64,
    gamma: f64,
    lambdas: &[f64],
    init: &GammaState,
) -> Vec<GammaState> {
    let shape_gain = lambdas.len() as f64 * alpha;
    let mut state = *init;
    let mut out = Vec::with_capacity(series.len());
    for (rec, &st) in series.records.iter().zip(s) {
        let weighted: f64 = lambdas.iter().zip(&rec.y).map(|(l, v)| l * v).sum();
        state = GammaState {
            a: gamma * state.a + shape_gain,
            b: gamma * state.b + st.exp() * weighted,
        };
        out.push(state);
    }
    out
}

/// Backward pass: `eta_T ~ Gam(a_T, b_T)`, then
/// `eta_t = gamma eta_{t+1} + z_t` with `z_t ~ Gam((1 - gamma) a_t, b_t)`.
pub(crate) fn backward_sample<R: Rng + ?Sized>(post: &[GammaState], gamma: f64, rng: &mut R) -> Result<Vec<f64>> {
    let t_len = post.len();
    let mut eta = vec![0.0; t_len];
    let Some(last) = post.last() else {
        return Ok(eta);
    };
    eta[t_len - 1] = gamma_draw(last.a, last.b, rng);
    for t in (0..t_len - 1).rev() {
        let z = gamma_draw((1.0 - gamma) * post[t].a, post[t].b, rng);
        eta[t] = gamma * eta[t + 1] + z;
    }
    if let Some(t) = eta.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Numeric(format!("environment draw at t={} is {}", t + 1, eta[t])));
    }
    Ok(eta)
}

/// One joint draw of the environment path from its smoothing law.
pub fn ffbs_sample<R: Rng + ?Sized>(
    series: &ObservationSeries,
    hyper: &HyperParams,
    model: &CorridorModel,
    init: &GammaState,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_complete(series, model.num_segments())?;
    let s = exponents(series, hyper)?;
    let post = forward_posteriors(series, &s, hyper.alpha, hyper.gamma, model.lambdas(), init);
    backward_sample(&post, hyper.gamma, rng)
}

/// Draw segment rates from their full conditionals
/// `Gam(r0_j + T alpha, q0_j + sum_t eta_t y_jt e^{beta.u_t})`.
/// No renormalization; see [`renormalize`].
pub fn draw_lambdas<R: Rng + ?Sized>(
    eta_path: &[f64],
    series: &ObservationSeries,
    hyper: &HyperParams,
    prior: &LambdaPrior,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if eta_path.len() != series.len() {
        return Err(Error::Shape {
            what: "environment path",
            expected: series.len(),
            got: eta_path.len(),
        });
    }
    let m = prior.len();
    if !series.is_empty() {
        check_complete(series, m)?;
    }
    let s = exponents(series, hyper)?;
    Ok(draw_lambdas_with(eta_path, series, &s, hyper.alpha, prior, rng))
}

pub(crate) fn draw_lambdas_with<R: Rng + ?Sized>(
    eta_path: &[f64],
    series: &ObservationSeries,
    s: &[f64],
    alpha: f64,
    prior: &LambdaPrior,
    rng: &mut R,
) -> Vec<f64> {
    let m = prior.len();
    let mut rates = prior.q0.clone();
    for ((rec, eta), st) in series.records.iter().zip(eta_path).zip(s) {
        let scale = eta * st.exp();
        for (q, y) in rates.iter_mut().zip(&rec.y) {
            *q += scale * y;
        }
    }
    let shape_gain = series.len() as f64 * alpha;
    (0..m).map(|j| gamma_draw(prior.r0[j] + shape_gain, rates[j], rng)).collect()
}

/// Rescale the rates to unit mean and the environment by the same factor;
/// every product `lambda_j eta_t` is unchanged. Returns the factor.
pub fn renormalize(lambdas: &mut [f64], eta_path: &mut [f64]) -> f64 {
    let k = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    lambdas.iter_mut().for_each(|l| *l /= k);
    eta_path.iter_mut().for_each(|e| *e *= k);
    k
}

/// Sum of one-step joint predictive log densities, the environment integrated out.
pub fn log_marginal_likelihood(
    series: &ObservationSeries,
    hyper: &HyperParams,
    model: &CorridorModel,
    init: &GammaState,
) -> Result<f64> {
    Ok(run_filter_mv(series, hyper, model, init)?.iter().map(|s| s.log_pred).sum())
}

pub(crate) fn log_marginal_with(
    series: &ObservationSeries,
    s: &[f64],
    alpha: f64,
    gamma: f64,
    lambdas: &[f64],
    init: &GammaState,
) -> f64 {
    let shape_gain = lambdas.len() as f64 * alpha;
    let mut state = *init;
    let mut acc = 0.0;
    for (rec, &st) in series.records.iter().zip(s) {
        let prior = GammaState {
            a: gamma * state.a,
            b: gamma * state.b,
        };
        acc += joint_logpdf_unchecked(&prior, alpha, lambdas, &rec.y, st);
        let weighted: f64 = lambdas.iter().zip(&rec.y).map(|(l, v)| l * v).sum();
        state = GammaState {
            a: prior.a + shape_gain,
            b: prior.b + st.exp() * weighted,
        };
    }
    acc
}

/// Beta prior on the discount factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub a: f64,
    pub b: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self { a: 1.0, b: 1.0 }
    }
}

impl GammaPrior {
    fn log_density(&self, g: f64) -> f64 {
        beta_logpdf(self.a, self.b, g)
    }
}

/// Metropolis step settings for the discount factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaStepConfig {
    pub prior: GammaPrior,
    /// Concentration `k` of the `Beta(k g, k (1 - g))` proposal.
    pub concentration: f64,
}

impl Default for GammaStepConfig {
    fn default() -> Self {
        Self {
            prior: GammaPrior::default(),
            concentration: 50.0,
        }
    }
}

fn beta_logpdf(a: f64, b: f64, x: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - dist::ln_beta(a, b)
}

fn proposal_logpdf(conc: f64, from: f64, to: f64) -> f64 {
    beta_logpdf(conc * from, conc * (1.0 - from), to)
}

/// One Metropolis-Hastings update of `gamma` under a Beta proposal centred on
/// the current value. The target is the marginal likelihood from the forward
/// filter times the prior. `hyper.gamma` is ignored.
pub fn metropolis_gamma<R: Rng + ?Sized>(
    current_gamma: f64,
    series: &ObservationSeries,
    hyper: &HyperParams,
    model: &CorridorModel,
    config: &GammaStepConfig,
    rng: &mut R,
) -> Result<(f64, bool)> {
    if !(current_gamma > 0.0 && current_gamma < 1.0) {
        return Err(domain("metropolis_gamma", format!("current gamma must lie in (0, 1), got {current_gamma}")));
    }
    if !(config.concentration > 0.0) {
        return Err(Error::Config(format!("proposal concentration must be positive, got {}", config.concentration)));
    }
    check_complete(series, model.num_segments())?;
    let s = exponents(series, hyper)?;
    let init = default_init_mv(series, hyper, model)?;
    let proposal = dist::beta_sample(config.concentration * current_gamma, config.concentration * (1.0 - current_gamma), rng)?;
    let u: f64 = rng.random();
    Ok(metropolis_decide(current_gamma, proposal, u, config, |g| {
        log_marginal_with(series, &s, hyper.alpha, g, model.lambdas(), &init)
    }))
}

/// Accept/reject `proposal` given a uniform `u`.
pub(crate) fn metropolis_decide(
    current: f64,
    proposal: f64,
    u: f64,
    config: &GammaStepConfig,
    log_target: impl Fn(f64) -> f64,
) -> (f64, bool) {
    if proposal == current {
        return (current, true);
    }
    if !(proposal > 0.0 && proposal < 1.0) {
        return (current, false);
    }
    let log_ratio = log_target(proposal) + config.prior.log_density(proposal)
        - log_target(current)
        - config.prior.log_density(current)
        + proposal_logpdf(config.concentration, proposal, current)
        - proposal_logpdf(config.concentration, current, proposal);
    if log_ratio.is_nan() {
        return (current, false);
    }
    if u.ln() < log_ratio {
        (proposal, true)
    } else {
        (current, false)
    }
}
