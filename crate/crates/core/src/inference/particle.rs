use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LambdaPrior;
use crate::corridor::CorridorModel;
use crate::dist::{gamma_draw, gamma_logpdf_unchecked};
use crate::env_filter::{evolve_state, GammaState, HyperParams, ObservationRecord, ObservationSeries};
use crate::error::{Error, Result};

/// One particle: current environment draw, its conjugate state, and the rate
/// sufficient statistics `(r_j, q_j)` with the rates currently in use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub eta: f64,
    pub state: GammaState,
    pub lambda_r: Vec<f64>,
    pub lambda_q: Vec<f64>,
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub weights: Vec<f64>,
    pub ess: f64,
}

impl ParticleSet {
    /// `n` equally weighted particles starting from `init`, with rates fixed at
    /// the model's values and sufficient statistics seeded from `prior`.
    pub fn new<R: Rng + ?Sized>(n: usize, init: &GammaState, model: &CorridorModel, prior: &LambdaPrior, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("particle count must be positive".into()));
        }
        if prior.len() != model.num_segments() {
            return Err(Error::Shape {
                what: "lambda prior",
                expected: model.num_segments(),
                got: prior.len(),
            });
        }
        let particles = (0..n)
            .map(|_| Particle {
                eta: gamma_draw(init.a, init.b, rng),
                state: *init,
                lambda_r: prior.r0.clone(),
                lambda_q: prior.q0.clone(),
                lambdas: model.lambdas().to_vec(),
            })
            .collect();
        Ok(Self {
            particles,
            weights: vec![1.0 / n as f64; n],
            ess: n as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Weighted posterior mean of the environment.
    pub fn eta_mean(&self) -> f64 {
        self.particles.iter().zip(&self.weights).map(|(p, w)| w * p.eta).sum()
    }

    /// Weighted posterior mean of each segment rate.
    pub fn lambda_mean(&self) -> Vec<f64> {
        let m = self.particles[0].lambdas.len();
        (0..m)
            .map(|j| self.particles.iter().zip(&self.weights).map(|(p, w)| w * p.lambdas[j]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfConfig {
    /// Resample when ESS falls below this fraction of the particle count.
    pub ess_threshold: f64,
    /// Redraw each particle's rates from its sufficient statistics after every step.
    pub learn_lambdas: bool,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            ess_threshold: 0.5,
            learn_lambdas: false,
        }
    }
}

/// Per-step summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfStepReport {
    pub t: usize,
    /// Predictive mean of the route total: the weighted mixture over particles
    /// of `alpha sum_j 1/lambda_j * b~ / (a~ - 1)`, infinite when `a~ <= 1`.
    pub predictive_mean: f64,
    /// The same mean estimated from the propagated environment draws,
    /// `sum_i w_i alpha sum_j 1/(lambda_j eta_i)`.
    pub predictive_mean_mc: f64,
    /// `log p(y_t | y_{1:t-1})` estimate.
    pub log_evidence_increment: f64,
    /// ESS after weighting, before any resampling.
    pub ess: f64,
    pub resampled: bool,
}

fn multinomial_resample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cdf.push(acc);
    }
    let n = weights.len();
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            cdf.partition_point(|c| *c <= u).min(n - 1)
        })
        .collect()
}

/// Advance the particle set by one observation: propagate each environment
/// from its evolved prior, weight by the observation likelihood, update the
/// conjugate state and rate statistics, then resample if ESS is low.
pub fn particle_step<R: Rng + ?Sized>(
    ps: ParticleSet,
    hyper: &HyperParams,
    obs: &ObservationRecord,
    config: &PfConfig,
    rng: &mut R,
) -> Result<(ParticleSet, PfStepReport)> {
    let n = ps.len();
    if n == 0 {
        return Err(Error::Config("empty particle set".into()));
    }
    let m = ps.particles[0].lambdas.len();
    if obs.y.len() != m {
        return Err(Error::Shape {
            what: "segment observation",
            expected: m,
            got: obs.y.len(),
        });
    }
    crate::env_filter::check_positive(obs.t, &obs.y, None)?;
    let s = hyper.covariate_exponent(&obs.u)?;
    let es = s.exp();
    let ParticleSet {
        mut particles, weights, ..
    } = ps;

    let mut log_w = Vec::with_capacity(n);
    let (mut pred_mean, mut pred_mean_mc) = (0.0, 0.0);
    for (p, w) in particles.iter_mut().zip(&weights) {
        let prior = evolve_state(&p.state, hyper);
        p.eta = gamma_draw(prior.a, prior.b, rng);
        let inv_sum: f64 = p.lambdas.iter().map(|l| 1.0 / l).sum();
        pred_mean += if prior.a > 1.0 {
            w * hyper.alpha * inv_sum * prior.b / ((prior.a - 1.0) * es)
        } else {
            f64::INFINITY
        };
        pred_mean_mc += w * hyper.alpha * inv_sum / (p.eta * es);
        let ll: f64 = p
            .lambdas
            .iter()
            .zip(&obs.y)
            .map(|(l, y)| gamma_logpdf_unchecked(hyper.alpha, l * p.eta * es, *y))
            .sum();
        log_w.push(w.ln() + ll);
        p.state = GammaState {
            a: prior.a + m as f64 * hyper.alpha,
            b: prior.b + es * p.lambdas.iter().zip(&obs.y).map(|(l, y)| l * y).sum::<f64>(),
        };
        for j in 0..m {
            p.lambda_r[j] += hyper.alpha;
            p.lambda_q[j] += p.eta * obs.y[j] * es;
        }
    }
    let max_lw = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max_lw.is_finite() {
        return Err(Error::Numeric(format!("t={}: particle weights degenerate, max log weight {max_lw}", obs.t)));
    }
    let mut new_w: Vec<f64> = log_w.iter().map(|lw| (lw - max_lw).exp()).collect();
    let total: f64 = new_w.iter().sum();
    new_w.iter_mut().for_each(|w| *w /= total);
    let ess = 1.0 / new_w.iter().map(|w| w * w).sum::<f64>();
    let log_evidence_increment = max_lw + total.ln();

    let resampled = ess < config.ess_threshold * n as f64;
    if resampled {
        let idx = multinomial_resample(&new_w, rng);
        particles = idx.iter().map(|&i| particles[i].clone()).collect();
        new_w = vec![1.0 / n as f64; n];
    }
    if config.learn_lambdas {
        for p in &mut particles {
            for j in 0..m {
                p.lambdas[j] = gamma_draw(p.lambda_r[j], p.lambda_q[j], rng);
            }
        }
    }
    let ess_after = if resampled { n as f64 } else { ess };
    Ok((
        ParticleSet {
            particles,
            weights: new_w,
            ess: ess_after,
        },
        PfStepReport {
            t: obs.t,
            predictive_mean: pred_mean,
            predictive_mean_mc: pred_mean_mc,
            log_evidence_increment,
            ess,
            resampled,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleFilterOutput {
    pub steps: Vec<PfStepReport>,
    pub log_evidence: f64,
    pub final_set: ParticleSet,
}

/// Run the particle filter over a whole series.
pub fn run_particle_filter<R: Rng + ?Sized>(
    series: &ObservationSeries,
    hyper: &HyperParams,
    model: &CorridorModel,
    init: &GammaState,
    n_particles: usize,
    config: &PfConfig,
    rng: &mut R,
) -> Result<ParticleFilterOutput> {
    if !(config.ess_threshold >= 0.0 && config.ess_threshold <= 1.0) {
        return Err(Error::Config(format!("ESS threshold must lie in [0, 1], got {}", config.ess_threshold)));
    }
    let prior = LambdaPrior::diffuse(model.num_segments())?;
    let mut ps = ParticleSet::new(n_particles, init, model, &prior, rng)?;
    let mut steps = Vec::with_capacity(series.len());
    for rec in &series.records {
        let (next, report) = particle_step(ps, hyper, rec, config, rng)?;
        ps = next;
        steps.push(report);
    }
    Ok(ParticleFilterOutput {
        log_evidence: steps.iter().map(|s| s.log_evidence_increment).sum(),
        steps,
        final_set: ps,
    })
}
