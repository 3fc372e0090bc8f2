//! Bayes optimal informer set (BOISE) selection.
//!
//! Given a binary target-by-compound bioactivity matrix, the crate samples
//! clusterings of the targets from a Chinese-restaurant / Beta-Bernoulli
//! posterior, scores candidate informer compound sets by posterior expected
//! loss, selects informers greedily (or with a cheaper entropy criterion), and
//! ranks every compound for a new target once informer outcomes are known.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`). The aliases
//! at the crate root fix the scalar to `f64`, which is what the CLI uses.

pub mod cli;
pub mod dpmm;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod oracle;
pub mod pel;
pub mod ranker;
pub mod rng;
pub mod scalar;
pub mod selector;

pub use error::{BoiseError, Result};
pub use matrix::{BioactivityMatrix, Binarized, ContinuousMatrix};
pub use scalar::Real;

pub type Hyperparams = dpmm::Hyperparams<f64>;
pub type Hyperparams32 = dpmm::Hyperparams<f32>;
pub type PosteriorEnsemble = dpmm::PosteriorEnsemble<f64>;
pub type PosteriorEnsemble32 = dpmm::PosteriorEnsemble<f32>;
pub type LinkDistribution = pel::LinkDistribution<f64>;
pub type PelEngine<'a> = pel::PelEngine<'a, f64>;
pub type EntropyObjective<'a> = selector::EntropyObjective<'a, f64>;
pub type Selection = selector::Selection<f64>;
pub type Ranking = ranker::Ranking<f64>;
pub type ExactModel<'a> = oracle::ExactModel<'a, f64>;
pub type NoClusterModel = oracle::NoClusterModel<f64>;

pub use dpmm::{Clustering, SamplerConfig};
pub use pel::InformerAssay;
