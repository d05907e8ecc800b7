//! Resolved run settings and their flat dotted-key JSON form.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::CliError;
use crate::network::{FusionMode, ModelConfig};
use crate::tensor::AdamHyper;
use crate::training::{make_frame_weights, TrainConfig};

/// Named seeds derived from the master seed; an explicit value wins over derivation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubSeeds {
    pub init: Option<u64>,
    pub shuffle: Option<u64>,
    pub dropout: Option<u64>,
    pub synth: Option<u64>,
}

pub const SUB_SEED_NAMES: [&str; 4] = ["init", "shuffle", "dropout", "synth"];

/// Sub-seed `name` of `master`: one ChaCha8 stream per name.
pub fn derive_seed(master: u64, name: &str) -> u64 {
    let stream = SUB_SEED_NAMES
        .iter()
        .position(|n| *n == name)
        .expect("known sub-seed name") as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream + 1);
    rng.next_u64()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `None` takes the joint count from the data.
    pub joints: Option<usize>,
    pub t_in: usize,
    pub t_out: usize,
    pub hidden: usize,
    pub depth: usize,
    pub slope: f64,
    pub dropout: f64,
    pub fusion: FusionMode,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            joints: None,
            t_in: m.t_in,
            t_out: m.t_out,
            hidden: m.hidden,
            depth: m.depth,
            slope: m.slope,
            dropout: m.dropout,
            fusion: m.fusion,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Trailing predicted frames weighted by `tail_weight`.
    pub tail_len: usize,
    pub tail_weight: f64,
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let adam = AdamHyper::default();
        Self {
            steps: 1000,
            batch: 16,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            tail_len: 0,
            tail_weight: 0.2,
            checkpoint_every: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub eval: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub prediction: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Frames between consecutive window starts.
    pub stride: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            train: None,
            eval: None,
            input: None,
            prediction: None,
            checkpoint: None,
            stride: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub joints: usize,
    pub frames: usize,
    pub fps: f64,
    pub sequences: usize,
    /// Extra held-out sequences used when `ablate` builds its own benchmark.
    pub eval_sequences: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            joints: 17,
            frames: 30,
            fps: 25.0,
            sequences: 8,
            eval_sequences: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub horizons: Vec<f64>,
    pub variants: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            horizons: vec![80.0, 160.0, 320.0, 400.0],
            variants: crate::eval::default_variants().into_iter().map(|v| v.label).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSection {
    /// `None` picks the first sequence of the input file.
    pub sequence: Option<String>,
    pub frames: Vec<usize>,
    pub projection: String,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self {
            sequence: None,
            frames: vec![0],
            projection: "xz".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSection {
    /// Entries checked per parameter group; `None` checks every entry.
    pub samples: Option<usize>,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self { samples: Some(4) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub seeds: SubSeeds,
    pub model: ModelSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub synth: SynthSection,
    pub eval: EvalSection,
    pub render: RenderSection,
    pub gradcheck: GradcheckSection,
}

fn flatten_into(prefix: &str, value: &Value, out: &mut Map<String, Value>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_into(&key, v, out);
            }
        }
        leaf => {
            out.insert(prefix.to_string(), leaf.clone());
        }
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        node = node
            .as_object_mut()
            .expect("section object")
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    node.as_object_mut()
        .expect("section object")
        .insert(parts[parts.len() - 1].to_string(), value);
}

impl RunConfig {
    /// Flat `{"section.key": value}` object in a stable key order.
    pub fn to_flat_json(&self) -> Value {
        let mut flat = Map::new();
        flatten_into("", &serde_json::to_value(self).expect("serializable config"), &mut flat);
        Value::Object(flat)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_flat_json()).expect("serializable config");
        s.push('\n');
        s
    }

    /// Defaults overridden by the keys of a flat JSON object; unknown keys are usage errors.
    pub fn from_flat_json(text: &str) -> Result<Self, CliError> {
        let parsed: Value =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config is not valid JSON: {e}")))?;
        let Value::Object(entries) = parsed else {
            return Err(CliError::Usage("config must be a JSON object of dotted keys".into()));
        };
        let mut tree = serde_json::to_value(RunConfig::default()).expect("serializable config");
        let known: BTreeSet<String> = match RunConfig::default().to_flat_json() {
            Value::Object(m) => m.keys().cloned().collect(),
            _ => unreachable!(),
        };
        for (key, value) in entries {
            if !known.contains(&key) {
                return Err(CliError::Usage(format!("unknown config key '{key}'")));
            }
            set_path(&mut tree, &key, value);
        }
        serde_json::from_value(tree).map_err(|e| CliError::Usage(format!("bad config value: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_flat_json(&text)
    }

    /// Sets the master seed and re-derives every sub-seed from it.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.seeds = SubSeeds::default();
    }

    /// Fills unset sub-seeds from the master seed.
    pub fn resolve_seeds(&mut self) {
        let master = self.seed;
        let fill = |slot: &mut Option<u64>, name| {
            slot.get_or_insert_with(|| derive_seed(master, name));
        };
        fill(&mut self.seeds.init, "init");
        fill(&mut self.seeds.shuffle, "shuffle");
        fill(&mut self.seeds.dropout, "dropout");
        fill(&mut self.seeds.synth, "synth");
    }

    pub fn seed_of(&self, name: &str) -> u64 {
        let slot = match name {
            "init" => self.seeds.init,
            "shuffle" => self.seeds.shuffle,
            "dropout" => self.seeds.dropout,
            "synth" => self.seeds.synth,
            _ => None,
        };
        slot.unwrap_or_else(|| derive_seed(self.seed, name))
    }

    pub fn model_config(&self, joints: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            joints,
            t_in: m.t_in,
            t_out: m.t_out,
            hidden: m.hidden,
            depth: m.depth,
            slope: m.slope,
            dropout: m.dropout,
            fusion: m.fusion,
            seed: self.seed_of("init"),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let t = &self.train;
        let frame_weights = make_frame_weights(self.model.t_out, t.tail_len, t.tail_weight)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(TrainConfig {
            steps: t.steps,
            batch_size: t.batch,
            adam: AdamHyper {
                lr: t.lr,
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
            },
            frame_weights,
            shuffle_seed: self.seed_of("shuffle"),
            dropout_seed: self.seed_of("dropout"),
            checkpoint_every: t.checkpoint_every,
            checkpoint_path: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.reseed(42);
        cfg.resolve_seeds();
        cfg.model.t_in = 7;
        cfg.data.train = Some("a/b.csv".into());
        let text = cfg.to_json_string();
        assert!(text.contains("\"model.t_in\": 7"));
        assert!(text.contains("\"seeds.init\""));
        assert_eq!(RunConfig::from_flat_json(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = RunConfig::from_flat_json(r#"{"model.depth": 16, "eval.horizons": [80, 160]}"#).unwrap();
        assert_eq!(cfg.model.depth, 16);
        assert_eq!(cfg.eval.horizons, vec![80.0, 160.0]);
        assert_eq!(cfg.train, TrainSection::default());
    }

    #[test]
    fn rejects_unknown_and_mistyped_keys() {
        assert!(matches!(
            RunConfig::from_flat_json(r#"{"model.width": 3}"#),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            RunConfig::from_flat_json(r#"{"model": 3}"#),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            RunConfig::from_flat_json(r#"{"model.depth": "x"}"#),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(RunConfig::from_flat_json("[1]"), Err(CliError::Usage(_))));
    }

    #[test]
    fn sub_seeds_are_distinct_and_stable() {
        let names = SUB_SEED_NAMES.map(|n| derive_seed(7, n));
        let unique: BTreeSet<u64> = names.iter().copied().collect();
        assert_eq!(unique.len(), 4);
        assert_eq!(derive_seed(7, "init"), names[0]);
        assert_ne!(derive_seed(8, "init"), names[0]);

        let mut cfg = RunConfig::default();
        cfg.seeds.shuffle = Some(5);
        assert_eq!(cfg.seed_of("shuffle"), 5);
        cfg.reseed(3);
        assert_eq!(cfg.seed_of("shuffle"), derive_seed(3, "shuffle"));
    }
}
