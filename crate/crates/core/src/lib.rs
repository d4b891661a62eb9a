//! Compression-policy search over joint channel pruning and mixed-precision
//! quantization.
//!
//! * [`searchspace`]: policy coordinates and the BOPs complexity model.
//! * [`predictor`]: the accuracy regressor and its importance-weighted training.
//! * [`optimizer`]: barrier-constrained momentum ascent on the predictor.
//! * [`active`]: uncertainty-driven sampling of policies to label.
//! * [`oracle`]: synthetic and replayed ground-truth accuracy.
//! * [`baselines`]: random selection and constrained evolutionary search.
//! * [`experiment`]: multi-seed ablation grids and sweeps.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below are what the CLI uses.

pub mod active;
pub mod baselines;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod fixture;
pub mod optimizer;
pub mod oracle;
pub mod predictor;
pub mod rng;
pub mod scalar;
pub mod searchspace;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use active::{active_learn, evolve_uncertain, fitness, random_learn, EvoConfig, LearnRun};
pub use baselines::{evo_search_constrained, random_select};
pub use dataset::SampleRecord;
pub use fixture::Fixture;
pub use optimizer::{optimize, OptConfig, Trajectory};
pub use oracle::{AccuracyOracle, ReplayOracle, SyntheticOracle};
pub use predictor::{train, Predictor, TrainConfig};
pub use searchspace::{Component, GridKey, LayerSpec, Policy, SearchSpace};

pub type SearchSpace64 = SearchSpace<f64>;
pub type SearchSpace32 = SearchSpace<f32>;
pub type Policy64 = Policy<f64>;
pub type Policy32 = Policy<f32>;
pub type Predictor64 = Predictor<f64>;
pub type Predictor32 = Predictor<f32>;
pub type SampleRecord64 = SampleRecord<f64>;
pub type TrainConfig64 = TrainConfig<f64>;
pub type OptConfig64 = OptConfig<f64>;
pub type EvoConfig64 = EvoConfig<f64>;
pub type SyntheticOracle64 = SyntheticOracle<f64>;
pub type Trajectory64 = Trajectory<f64>;
