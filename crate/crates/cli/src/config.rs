//! Experiment config: one JSON document per experiment.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use seerpol::{EvoConfig64, Fixture, OptConfig64, SearchSpace64, SyntheticOracle64, TrainConfig64};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Active,
    Random,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSection {
    /// Coefficients embedded in the space fixture.
    #[default]
    Synthetic,
    /// Recorded accuracies from a dataset CSV.
    Replay {
        path: PathBuf,
    },
    None,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSection {
    /// Checkpoint path; relative paths resolve against `output_dir`.
    pub checkpoint: PathBuf,
    pub sampler: SamplerKind,
    /// Labeled-sample budget of the random sampler (default: rounds x samples_per_round).
    pub samples: Option<usize>,
}

impl Default for PredictorSection {
    fn default() -> Self {
        Self { checkpoint: PathBuf::from("predictor.json"), sampler: SamplerKind::Active, samples: None }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepValues {
    pub init_complexity: Vec<f64>,
    pub eta: Vec<f64>,
    pub b0: Vec<f64>,
    pub budget: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub seeds: Vec<u64>,
    /// Candidates drawn by the random-selection baseline.
    pub random_k: usize,
    pub sweep: SweepValues,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            random_k: seerpol::baselines::DEFAULT_RANDOM_K,
            sweep: SweepValues::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub space: PathBuf,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub predictor: PredictorSection,
    #[serde(default)]
    pub train: TrainConfig64,
    #[serde(default)]
    pub evo: EvoConfig64,
    #[serde(default)]
    pub opt: OptConfig64,
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub output_dir: PathBuf,
}

/// A loaded config with paths resolved and the space and oracle built.
pub struct Config {
    pub raw: RawConfig,
    pub space: SearchSpace64,
    pub synthetic: Option<SyntheticOracle64>,
    pub replay_path: Option<PathBuf>,
    pub output_dir: PathBuf,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let raw: RawConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let space_path = resolve(base, &raw.space);
        let fixture = Fixture::load(&space_path)
            .map_err(|e| CliError::Config(format!("space: cannot load fixture {}: {e}", space_path.display())))?;
        let space = fixture.space().map_err(|e| CliError::Config(format!("space: {e}")))?;
        let (synthetic, replay_path) = match &raw.oracle {
            OracleSection::Synthetic => {
                let o = fixture.oracle().map_err(|e| CliError::Config(format!("oracle: {e}")))?;
                if o.is_none() {
                    return Err(CliError::Config(format!(
                        "oracle: fixture {} has no oracle section",
                        space_path.display()
                    )));
                }
                (o, None)
            }
            OracleSection::Replay { path } => (None, Some(resolve(base, &path))),
            OracleSection::None => (None, None),
        };
        raw.train.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
        raw.evo.validate().map_err(|e| CliError::Config(format!("evo: {e}")))?;
        raw.opt.validate().map_err(|e| CliError::Config(format!("opt: {e}")))?;
        if raw.experiment.seeds.is_empty() {
            return Err(CliError::Config("experiment.seeds must not be empty".into()));
        }
        let output_dir = resolve(base, &raw.output_dir);
        Ok(Self { raw, space, synthetic, replay_path, output_dir })
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        resolve(&self.output_dir, &self.raw.predictor.checkpoint)
    }
}
