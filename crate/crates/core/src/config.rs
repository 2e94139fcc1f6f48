//! Run configuration for the command-line front end.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::GenerateMode;
use crate::learner::{AnsatzShape, TrainConfig};
use crate::qcore::SubspaceLayout;
use crate::timeseries::SdeSpec;
use crate::verify::SearchConfig;

/// Environment variable overriding `paths.workdir`.
pub const WORKDIR_ENV: &str = "HAMLEARN_WORKDIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizeSection {
    pub bits: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub horizon: usize,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub mode: GenerateMode,
    #[serde(default)]
    pub seed: u64,
    /// Start value per dimension; zeros when absent.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
}

fn default_n_traj() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonMarkovSection {
    pub keep: usize,
    pub t_max: f64,
    pub dt: f64,
    pub pairs: usize,
    pub seed: u64,
}

impl Default for NonMarkovSection {
    fn default() -> Self {
        Self {
            keep: 0,
            t_max: 50.0,
            dt: 0.25,
            pairs: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub search: SearchConfig,
}

/// Transitions planted from a random reference model instead of data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSection {
    pub seed: u64,
    #[serde(default = "default_planted_scale")]
    pub scale: f64,
}

fn default_planted_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeSection {
    /// Schedule `{1} ∪ {2, …, 2t}` for `t = 1..=steps`.
    pub steps: usize,
    pub plateau_tolerance: f64,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        Self {
            steps: 4,
            plateau_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub workdir: Option<PathBuf>,
    /// Input series for `train`; `<out>/series.csv` when absent.
    pub series: Option<PathBuf>,
    /// Model for the analysis commands; `<out>/model.json` when absent.
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub sde: Option<SdeSpec>,
    #[serde(default)]
    pub discretize: Option<DiscretizeSection>,
    #[serde(default)]
    pub layout: Option<SubspaceLayout>,
    #[serde(default)]
    pub ansatz: Option<AnsatzShape>,
    #[serde(default)]
    pub lags: Option<Vec<usize>>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub planted: Option<PlantedSection>,
    #[serde(default)]
    pub generate: Option<GenerateSection>,
    #[serde(default)]
    pub nonmarkov: Option<NonMarkovSection>,
    #[serde(default)]
    pub verify: Option<VerifySection>,
    #[serde(default)]
    pub converge: Option<ConvergeSection>,
    #[serde(default)]
    pub paths: PathsSection,
}

/// Borrow a required section or fail with a config error naming it.
pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| Error::Config(format!("missing `{name}` section")))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// `--out`, then `HAMLEARN_WORKDIR`, then `paths.workdir`, then `.`.
    pub fn output_dir(&self, cli_out: Option<&Path>, env_workdir: Option<&Path>) -> PathBuf {
        cli_out
            .or(env_workdir)
            .or(self.paths.workdir.as_deref())
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf()
    }

    pub fn layout(&self) -> Result<SubspaceLayout> {
        let layout = require(&self.layout, "layout")?.clone();
        layout.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(layout)
    }

    pub fn lags(&self) -> Result<Vec<usize>> {
        crate::timeseries::normalize_lags(require(&self.lags, "lags")?)
            .map_err(|e| Error::Config(e.to_string()))
    }
}
