use std::path::{Path, PathBuf};

use patchnet_core::bench::BenchScenario;
use patchnet_core::data::{
    BurnGenConfig, DatasetKind, FaceGenConfig, InputChannels, PatchTask, SkinRuleConfig, Split,
};
use patchnet_core::metrics::{Aggregation, HIT_THRESHOLD};
use patchnet_core::models::ModelConfig;
use patchnet_core::train::TrainConfig;
use patchnet_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// The JSON run configuration. Every section is optional; subcommands
/// complain about the ones they need.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub dataset: Option<DatasetSection>,
    pub model: Option<ModelConfig>,
    pub train: Option<TrainConfig>,
    pub eval: Option<EvalSection>,
    pub bench: Option<BenchScenario>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    pub count: usize,
    /// Output directory for `gen`.
    pub dir: Option<PathBuf>,
    /// Manifest read by `train`, `eval` and `predict`.
    pub manifest: Option<PathBuf>,
    pub burn: BurnGenConfig,
    pub faces: FaceGenConfig,
    pub skin_rules: SkinRuleConfig,
    pub task: PatchTask,
    pub channels: InputChannels,
    pub patch_size: usize,
    /// Patches drawn per class from each image.
    pub quota_per_image: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            kind: DatasetKind::Burn,
            count: 50,
            dir: None,
            manifest: None,
            burn: BurnGenConfig::default(),
            faces: FaceGenConfig::default(),
            skin_rules: SkinRuleConfig::default(),
            task: PatchTask::SkinVsBurn,
            channels: InputChannels::Rgb,
            patch_size: 32,
            quota_per_image: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub threshold: f64,
    pub stride: usize,
    pub aggregation: Aggregation,
    pub split: Split,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            threshold: HIT_THRESHOLD,
            stride: 16,
            aggregation: Aggregation::Mean,
            split: Split::Val,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Pushes a run-level seed into the sections that carry their own.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        if let Some(t) = &mut self.train {
            t.seed = seed;
        }
        if let Some(b) = &mut self.bench {
            b.seed = seed;
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn dataset(&self) -> DatasetSection {
        self.dataset.clone().unwrap_or_default()
    }

    pub fn eval(&self) -> EvalSection {
        self.eval.clone().unwrap_or_default()
    }

    pub fn train(&self) -> TrainConfig {
        let mut t = self.train.clone().unwrap_or_default();
        if let Some(s) = self.seed {
            t.seed = s;
        }
        t
    }

    pub fn model(&self) -> Result<ModelConfig> {
        self.model
            .clone()
            .ok_or_else(|| Error::Config("the run configuration has no model section".into()))
    }
}
