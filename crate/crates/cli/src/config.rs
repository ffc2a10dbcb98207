//! The run configuration: one TOML file whose every section has defaults,
//! overridden field by field from the command line.

use std::path::Path;

use poselift::dataset::Split;
use poselift::eval::JointAveraging;
use poselift::nn::{Architecture, Flags};
use poselift::optim::OptimizerKind;
use poselift::preprocess::{SkeletonSpec, H36M_JOINTS};
use poselift::train::TrainingConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_error, validation, CliResult};

/// Hex characters of the SHA-256 config digest kept in file names and headers.
pub const HASH_LEN: usize = 12;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub skeleton: SkeletonConfig,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub gradcheck: GradCheckConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkeletonConfig {
    pub joints: Vec<String>,
    pub root: usize,
    /// Drop the always-zero root coordinates from network inputs and outputs.
    pub exclude_root: bool,
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        Self {
            joints: H36M_JOINTS.iter().map(|s| s.to_string()).collect(),
            root: 0,
            exclude_root: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub samples: usize,
    /// Standard deviation of the 2D detector noise, pixels.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            samples: 5000,
            noise_sigma: 3.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub width: usize,
    pub blocks: usize,
    pub max_norm: bool,
    pub batch_norm: bool,
    pub residual: bool,
    pub dropout: f64,
    pub maxnorm_c: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let a = Architecture::default();
        Self {
            width: a.width,
            blocks: a.blocks,
            max_norm: a.flags.max_norm,
            batch_norm: a.flags.batch_norm,
            residual: a.flags.residual,
            dropout: a.dropout_rate,
            maxnorm_c: a.maxnorm_c,
            bn_momentum: a.bn_momentum,
            bn_epsilon: a.bn_epsilon,
            precision: Precision::F64,
        }
    }
}

impl ModelConfig {
    pub fn flags(&self) -> Flags {
        Flags {
            max_norm: self.max_norm,
            batch_norm: self.batch_norm,
            residual: self.residual,
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            width: self.width,
            blocks: self.blocks,
            flags: self.flags(),
            dropout_rate: self.dropout,
            maxnorm_c: self.maxnorm_c,
            bn_momentum: self.bn_momentum,
            bn_epsilon: self.bn_epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerName,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub lr_decay: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let t = TrainingConfig::default();
        let OptimizerKind::Adam { beta1, beta2, eps } = OptimizerKind::default() else {
            unreachable!("adam is the default optimizer")
        };
        Self {
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            optimizer: OptimizerName::Adam,
            beta1,
            beta2,
            adam_eps: eps,
            lr_decay: t.lr_decay,
            seed: t.seed,
            shuffle: t.shuffle,
        }
    }
}

impl TrainConfig {
    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            optimizer: match self.optimizer {
                OptimizerName::Sgd => OptimizerKind::Sgd,
                OptimizerName::Adam => OptimizerKind::Adam {
                    beta1: self.beta1,
                    beta2: self.beta2,
                    eps: self.adam_eps,
                },
            },
            lr_decay: self.lr_decay,
            seed: self.seed,
            shuffle: self.shuffle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mpjpe_joints: JointAveraging,
    pub split: Split,
    pub sweep_blocks: Vec<usize>,
    pub sweep_widths: Vec<usize>,
    /// Extra context around the detector box, fraction of its longer side.
    pub crop_margin: f64,
    /// Side of the square 2D-estimator input, pixels.
    pub input_size: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mpjpe_joints: JointAveraging::AllJoints,
            split: Split::Val,
            sweep_blocks: vec![1, 2, 3],
            sweep_widths: vec![128, 256, 512, 1024],
            crop_margin: poselift::geometry::DEFAULT_MARGIN_FRAC,
            input_size: poselift::geometry::DEFAULT_OUT_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub width: usize,
    pub blocks: usize,
    pub batch: usize,
    pub eps: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            width: 8,
            blocks: 1,
            batch: 4,
            eps: 1e-5,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Reads `path`, or returns the defaults when there is none.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        toml::from_str(&text).map_err(|e| validation(format!("{}: {e}", path.display())))
    }

    pub fn skeleton_spec(&self) -> CliResult<SkeletonSpec> {
        let s = &self.skeleton;
        Ok(SkeletonSpec::with_root_policy(
            s.joints.clone(),
            s.root,
            s.exclude_root,
        )?)
    }

    /// Checks every section before any work starts.
    pub fn validate(&self) -> CliResult<()> {
        self.skeleton_spec()?;
        let s = &self.synth;
        if s.samples == 0 {
            return Err(validation("synth.samples must be at least 1"));
        }
        if !(s.noise_sigma >= 0.0 && s.noise_sigma.is_finite()) {
            return Err(validation("synth.noise_sigma must be a non-negative number"));
        }
        let arch = self.model.architecture();
        arch.validate()?;
        self.train.training().validate(arch.flags.batch_norm)?;
        let e = &self.eval;
        if e.sweep_blocks.is_empty() || e.sweep_widths.is_empty() {
            return Err(validation("eval.sweep_blocks and eval.sweep_widths must be non-empty"));
        }
        if e.sweep_widths.contains(&0) {
            return Err(validation("eval.sweep_widths entries must be positive"));
        }
        if !(e.crop_margin >= 0.0 && e.crop_margin.is_finite()) {
            return Err(validation("eval.crop_margin must be a non-negative number"));
        }
        if !(e.input_size > 0.0 && e.input_size.is_finite()) {
            return Err(validation("eval.input_size must be positive"));
        }
        let g = &self.gradcheck;
        if g.width == 0 || g.batch < 2 {
            return Err(validation("gradcheck needs width >= 1 and batch >= 2"));
        }
        if !(g.eps > 0.0 && g.eps.is_finite()) {
            return Err(validation("gradcheck.eps must be positive"));
        }
        if !(g.tolerance > 0.0) {
            return Err(validation("gradcheck.tolerance must be positive"));
        }
        Ok(())
    }

    /// Truncated SHA-256 of the canonical TOML rendering of the resolved
    /// configuration.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(digest)[..HASH_LEN].to_string()
    }
}
