//! Posterior inference for segment rates and the environment path.
//!
//! [`run_gibbs`] alternates a forward-filter backward-sample draw of the whole
//! environment path with conjugate Gamma draws of the segment rates, with an
//! optional Metropolis step for the discount factor. [`run_particle_filter`]
//! is the online counterpart.

mod diagnostics;
mod ffbs;
mod gibbs;
mod particle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use diagnostics::{effective_sample_size, split_rhat};
pub use ffbs::{
    draw_lambdas, ffbs_sample, log_marginal_likelihood, metropolis_gamma, renormalize, GammaPrior, GammaStepConfig,
};
pub use gibbs::{run_gibbs, GibbsConfig, GibbsDraw, GibbsOutput, ParamSummary};
pub use particle::{
    particle_step, run_particle_filter, Particle, ParticleFilterOutput, ParticleSet, PfConfig, PfStepReport,
};

/// Independent Gamma priors on the segment rates, `lambda_j ~ Gam(r0_j, q0_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPrior {
    pub r0: Vec<f64>,
    pub q0: Vec<f64>,
}

/// Default prior shape for each segment rate.
pub const DEFAULT_LAMBDA_SHAPE: f64 = 1.0;
/// Default prior rate for each segment rate.
pub const DEFAULT_LAMBDA_RATE: f64 = 1e-3;

impl LambdaPrior {
    pub fn new(r0: Vec<f64>, q0: Vec<f64>) -> Result<Self> {
        if r0.len() != q0.len() {
            return Err(Error::Shape {
                what: "lambda prior rates",
                expected: r0.len(),
                got: q0.len(),
            });
        }
        if r0.is_empty() {
            return Err(Error::Config("lambda prior needs at least one segment".into()));
        }
        if let Some(v) = r0.iter().chain(&q0).find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("lambda prior parameters must be positive, got {v}")));
        }
        Ok(Self { r0, q0 })
    }

    /// A diffuse prior, `Gam(1, 0.001)` for every segment.
    pub fn diffuse(m: usize) -> Result<Self> {
        Self::new(vec![DEFAULT_LAMBDA_SHAPE; m], vec![DEFAULT_LAMBDA_RATE; m])
    }

    pub fn len(&self) -> usize {
        self.r0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r0.is_empty()
    }
}
