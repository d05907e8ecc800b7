//! The two-stream predictor: TST blocks over the joints x coordinates plane
//! (time as channels), a position stream, a velocity stream whose predicted
//! displacements are accumulated onto the last observed pose, and the
//! temporal fusion head.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use forward::{
    model_forward, predict, pstream_forward, temporal_fusion, tst_forward, vstream_forward, ForwardOptions, ModelVars,
    Prediction, PredictionValues, TstVars,
};
pub use params::{init_params, skip_endpoints, ConvLayer, Skip, TSTParams, TwoStreamModelParams};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;

/// TST depths the ablation harness supports.
pub const SUPPORTED_DEPTHS: [usize; 4] = [6, 11, 16, 21];

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = NetworkError> = std::result::Result<T, E>;

/// How the two stream predictions are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// Per-timestep selectors followed by the reinforcement TST.
    TemporalFusion,
    /// Elementwise sum followed by the reinforcement TST.
    Addition,
    /// Whole-tensor channel concatenation, one 1x1 conv, then the reinforcement TST.
    NaiveConcat,
    /// Position stream output only.
    POnly,
    /// Velocity stream output only.
    VOnly,
}

impl FusionMode {
    pub const ALL: [FusionMode; 5] = [
        FusionMode::POnly,
        FusionMode::VOnly,
        FusionMode::Addition,
        FusionMode::NaiveConcat,
        FusionMode::TemporalFusion,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FusionMode::TemporalFusion => "temporal-fusion",
            FusionMode::Addition => "addition",
            FusionMode::NaiveConcat => "naive-concat",
            FusionMode::POnly => "p-only",
            FusionMode::VOnly => "v-only",
        }
    }

    pub fn has_reinforcement(self) -> bool {
        matches!(
            self,
            FusionMode::TemporalFusion | FusionMode::Addition | FusionMode::NaiveConcat
        )
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FusionMode {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self> {
        FusionMode::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| NetworkError::Config(format!("unknown fusion mode '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TSTConfig {
    pub c_in: usize,
    pub c_out: usize,
    pub hidden: usize,
    pub slope: f64,
    pub dropout: f64,
    pub depth: usize,
}

impl TSTConfig {
    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_DEPTHS.contains(&self.depth) {
            return Err(NetworkError::Config(format!(
                "TST depth {} not in {SUPPORTED_DEPTHS:?}",
                self.depth
            )));
        }
        if self.c_in == 0 || self.c_out == 0 || self.hidden == 0 {
            return Err(NetworkError::Config(format!(
                "channel counts must be positive: {self:?}"
            )));
        }
        if !(0.0..1.0).contains(&self.slope) || !(0.0..1.0).contains(&self.dropout) {
            return Err(NetworkError::Config(format!(
                "slope {} and dropout {} must lie in [0, 1)",
                self.slope, self.dropout
            )));
        }
        Ok(())
    }

    /// Channel count at a layer boundary (0 = block input, `depth` = block output).
    pub fn channels_at(&self, boundary: usize) -> usize {
        match boundary {
            0 => self.c_in,
            b if b == self.depth => self.c_out,
            _ => self.hidden,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub joints: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub hidden: usize,
    pub depth: usize,
    pub slope: f64,
    pub dropout: f64,
    pub fusion: FusionMode,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            joints: 22,
            t_in: 10,
            t_out: 10,
            hidden: 64,
            depth: 11,
            slope: 0.2,
            dropout: 0.1,
            fusion: FusionMode::TemporalFusion,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.joints < 1 || self.t_in < 2 || self.t_out < 1 {
            return Err(NetworkError::Config(format!(
                "need joints >= 1, t_in >= 2, t_out >= 1 (got {}, {}, {})",
                self.joints, self.t_in, self.t_out
            )));
        }
        self.p_config().validate()
    }

    fn tst(&self, c_in: usize, c_out: usize) -> TSTConfig {
        TSTConfig {
            c_in,
            c_out,
            hidden: self.hidden,
            slope: self.slope,
            dropout: self.dropout,
            depth: self.depth,
        }
    }

    pub fn p_config(&self) -> TSTConfig {
        self.tst(self.t_in, self.t_out)
    }

    pub fn v_config(&self) -> TSTConfig {
        self.tst(self.t_in - 1, self.t_out)
    }

    pub fn reinf_config(&self) -> TSTConfig {
        self.tst(self.t_out, self.t_out)
    }
}
