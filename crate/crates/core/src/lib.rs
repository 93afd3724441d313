//! Dynamic Gamma models with a common random environment for multi-segment
//! travel time.
//!
//! Segment travel times are Gamma distributed given a latent corridor-wide
//! environment `eta_t`, which evolves through a Beta-multiplicative Markov
//! step. Conditioning on the environment keeps every update conjugate, and a
//! two-moment Gamma match of the route sum turns the route predictive into a
//! scaled F distribution. The crate covers:
//!
//! * [`dist`]: special functions and the handful of laws everything else uses.
//! * [`env_filter`]: the univariate filter and its compound-Gamma predictive.
//! * [`corridor`]: the multi-segment filter sharing one environment.
//! * [`route`]: route predictive, reliability metrics (PTI, buffer index, on-time).
//! * [`inference`]: FFBS Gibbs sampling, a particle filter, convergence diagnostics.
//! * [`baselines`]: static fits, Gamma mixtures and the comparison methods.
//! * [`evalkit`]: PIT, KS, coverage, Ljung-Box and the hyperparameter grid search.
//! * [`dataio`]: sensor CSV ingestion, travel time construction, simulation.
//!
//! All Gamma laws use the shape/rate parameterization.

pub mod baselines;
pub mod corridor;
pub mod dataio;
pub mod dist;
pub mod env_filter;
mod error;
pub mod evalkit;
pub mod inference;
pub mod route;

pub use corridor::CorridorModel;
pub use env_filter::{GammaState, HyperParams, ObservationRecord, ObservationSeries};
pub use error::{Error, Result};
pub use route::RoutePredictive;

/// Deterministic random stream used by every sampler in the crate.
pub type Rng = rand_chacha::ChaCha20Rng;

/// Build the crate's random stream from a seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
