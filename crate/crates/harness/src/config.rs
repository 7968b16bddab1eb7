use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use m2dl_cnn::Activation;
use m2dl_core::lrr::LrrOpts;
use m2dl_core::mtl::{Penalty, SolverOpts};
use m2dl_synth::SceneParams;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ablation axis: with or without manifold regularization of the features,
/// and with one coupled multi-task solve or independent per-task solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Variant {
    #[default]
    M2DL,
    SMDL,
    MDL,
    TDL,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::M2DL, Variant::SMDL, Variant::MDL, Variant::TDL];

    pub fn label(self) -> &'static str {
        match self {
            Variant::M2DL => "M2DL",
            Variant::SMDL => "SMDL",
            Variant::MDL => "MDL",
            Variant::TDL => "TDL",
        }
    }

    pub fn manifold(self) -> bool {
        matches!(self, Variant::M2DL | Variant::SMDL)
    }

    pub fn multi_task(self) -> bool {
        matches!(self, Variant::M2DL | Variant::MDL)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?} (M2DL, SMDL, MDL, TDL)")))
    }
}

/// Image annotations as exported by `gen-data`: `path,task,pan,tilt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSource {
    pub train_dir: PathBuf,
    pub train_csv: PathBuf,
    pub test_dir: PathBuf,
    pub test_csv: PathBuf,
    /// Images are resized to `image_size × image_size`.
    pub image_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SceneParams),
    Csv(CsvSource),
}

impl DataSource {
    pub fn image_size(&self) -> usize {
        match self {
            DataSource::Synthetic(p) => p.image_size,
            DataSource::Csv(c) => c.image_size,
        }
    }
}

/// Stage-1 network and SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub eta: f64,
    pub batch_size: usize,
    pub conv_widths: [usize; 3],
    pub fc_units: usize,
    /// Angles are divided by this before CNN training.
    pub target_scale: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 30,
            eta: 0.1,
            batch_size: 32,
            conv_widths: [16, 16, 12],
            fc_units: 512,
            target_scale: 90.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub activation: Activation,
    pub mtl_penalty: Penalty,
    pub repeats: usize,
    pub seed: u64,
    pub solver: SolverOpts,
    pub training: TrainingConfig,
    pub data: DataSource,
    /// Error weight of the manifold regularization, for features rescaled to
    /// unit mean sample norm.
    pub mrcl_lambda: f64,
    /// Samples per manifold-regularization block.
    pub mrcl_block: usize,
    pub mrcl: LrrOpts,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            variant: Variant::M2DL,
            activation: Activation::ReLU,
            mtl_penalty: Penalty::LeastSparseTrace,
            repeats: 20,
            seed: 0,
            solver: SolverOpts {
                rho1: 10.0,
                gamma: 10.0,
                ..SolverOpts::default()
            },
            training: TrainingConfig::default(),
            data: DataSource::Synthetic(SceneParams {
                image_size: 32,
                ..SceneParams::dpose_like()
            }),
            mrcl_lambda: 10.0,
            mrcl_block: 50,
            mrcl: LrrOpts::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.repeats == 0 {
            return bad("repeats must be ≥ 1".into());
        }
        if self.mrcl_block < 2 {
            return bad(format!("mrcl_block must be ≥ 2, got {}", self.mrcl_block));
        }
        if !(self.mrcl_lambda > 0.0 && self.mrcl_lambda.is_finite()) {
            return bad(format!("mrcl_lambda must be positive, got {}", self.mrcl_lambda));
        }
        let t = &self.training;
        if t.epochs == 0 || t.batch_size == 0 || t.fc_units == 0 || t.conv_widths.contains(&0) {
            return bad("training epochs, batch_size, widths and fc_units must be ≥ 1".into());
        }
        if !(t.eta > 0.0 && t.eta.is_finite()) || !(t.target_scale > 0.0 && t.target_scale.is_finite()) {
            return bad("training eta and target_scale must be positive".into());
        }
        self.solver.validate()?;
        self.mrcl.validate()?;
        if let DataSource::Synthetic(p) = &self.data {
            p.validate()?;
        }
        self.network(2).shapes()?;
        Ok(())
    }

    /// Stage-1 network for `d2` regression outputs.
    pub fn network(&self, d2: usize) -> m2dl_cnn::NetworkSpec {
        let size = self.data.image_size();
        m2dl_cnn::NetworkSpec::with_widths(
            (1, size, size),
            self.training.conv_widths,
            self.training.fc_units,
            d2,
            self.activation,
        )
    }
}
