//! Weighted squared-error loss and the seeded Adam training loop.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::SampleWindow;
use crate::network::{
    init_params, model_forward, save_checkpoint, ForwardOptions, ModelConfig, ModelVars, NetworkError,
    TwoStreamModelParams,
};
use crate::tensor::{adam_step, AdamHyper, AdamState, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize },
    #[error("training and evaluation windows overlap: {0}")]
    Overlap(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

/// `tail_len` trailing entries set to `tail_weight`, the rest to 1.
pub fn make_frame_weights(t_out: usize, tail_len: usize, tail_weight: f64) -> Result<Vec<f64>> {
    if tail_len > t_out {
        return Err(TrainError::Config(format!(
            "tail length {tail_len} exceeds {t_out} frames"
        )));
    }
    if !(tail_weight > 0.0 && tail_weight.is_finite()) {
        return Err(TrainError::Config(format!(
            "tail weight must be positive, got {tail_weight}"
        )));
    }
    let mut w = vec![1.0; t_out];
    w[t_out - tail_len..].fill(tail_weight);
    Ok(w)
}

/// `(1 / (T * N)) * sum_t w_t * sum_k |pred[t,k] - target[t,k]|^2` over `[T, N, 3]` arrays.
pub fn weighted_loss(pred: &Tensor, target: &Tensor, weights: &[f64]) -> Result<f64> {
    if pred.shape() != target.shape() || pred.shape().len() != 3 || pred.shape()[0] != weights.len() {
        return Err(TrainError::Shape(format!(
            "pred {:?}, target {:?}, {} weights",
            pred.shape(),
            target.shape(),
            weights.len()
        )));
    }
    Ok(crate::tensor::tape_weighted_sq_error(pred, target, weights))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub frame_weights: Vec<f64>,
    pub shuffle_seed: u64,
    pub dropout_seed: u64,
    /// Write a checkpoint every this many steps (and after the last one).
    pub checkpoint_every: Option<usize>,
    pub checkpoint_path: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(steps: usize, t_out: usize) -> Self {
        Self {
            steps,
            batch_size: 16,
            adam: AdamHyper::default(),
            frame_weights: vec![1.0; t_out],
            shuffle_seed: 0,
            dropout_seed: 0,
            checkpoint_every: None,
            checkpoint_path: None,
        }
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.steps < 1 || self.batch_size < 1 {
            return Err(TrainConfig::bad("steps and batch size must be at least 1"));
        }
        if self.frame_weights.len() != model.t_out {
            return Err(TrainError::Config(format!(
                "{} frame weights for {} predicted frames",
                self.frame_weights.len(),
                model.t_out
            )));
        }
        if self.frame_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(TrainConfig::bad("frame weights must be positive"));
        }
        if self.checkpoint_every == Some(0) {
            return Err(TrainConfig::bad("checkpoint cadence must be at least 1"));
        }
        self.adam.validate()?;
        Ok(())
    }

    fn bad(m: &str) -> TrainError {
        TrainError::Config(m.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub millis: u128,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

impl TrainLog {
    /// `step,loss,millis` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss,millis\n");
        for r in &self.records {
            writeln!(out, "{},{:e},{}", r.step, r.loss, r.millis).unwrap();
        }
        out
    }

    /// `step,loss` rows; free of timing so identical runs produce identical bytes.
    pub fn loss_trace_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for r in &self.records {
            writeln!(out, "{},{:e}", r.step, r.loss).unwrap();
        }
        out
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: TwoStreamModelParams,
    pub log: TrainLog,
}

/// Errors when any window id appears in both sets.
pub fn check_disjoint(train: &[SampleWindow], eval: &[SampleWindow]) -> Result<()> {
    let ids: HashSet<String> = train.iter().map(|w| w.id()).collect();
    match eval.iter().find(|w| ids.contains(&w.id())) {
        Some(w) => Err(TrainError::Overlap(w.id())),
        None => Ok(()),
    }
}

/// Mean weighted loss of the fused prediction over `batch`, recorded on `tape`.
fn batch_loss(
    tape: &mut Tape,
    vars: &ModelVars,
    batch: &[&SampleWindow],
    weights: &[f64],
    options: ForwardOptions,
    rng: &mut ChaCha8Rng,
) -> Result<crate::tensor::Var> {
    let mut total = None;
    for window in batch {
        let x = tape.constant(window.input.clone())?;
        let target = tape.constant(window.target.clone())?;
        let pred = model_forward(tape, vars, x, options, rng)?;
        let loss = tape.weighted_sq_error(pred.fused, target, weights)?;
        total = Some(match total {
            None => loss,
            Some(acc) => tape.add(acc, loss)?,
        });
    }
    let total = total.ok_or(TrainError::EmptyDataset)?;
    Ok(tape.scale(total, 1.0 / batch.len() as f64)?)
}

fn check_windows(model: &ModelConfig, data: &[SampleWindow]) -> Result<()> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let input = [model.t_in, model.joints, 3];
    let target = [model.t_out, model.joints, 3];
    if let Some(w) = data
        .iter()
        .find(|w| w.input.shape() != input || w.target.shape() != target)
    {
        return Err(TrainError::Shape(format!(
            "window {} has input {:?} / target {:?}, model wants {input:?} / {target:?}",
            w.id(),
            w.input.shape(),
            w.target.shape()
        )));
    }
    Ok(())
}

pub fn train(model: &ModelConfig, data: &[SampleWindow], config: &TrainConfig) -> Result<TrainOutcome> {
    train_from(init_params(model)?, data, config)
}

/// Trains starting from `params`.
///
/// Each step draws the next `batch_size` windows of a per-epoch shuffle, runs
/// the model in training mode, and applies one Adam update on the loss of the
/// fused output only.
pub fn train_from(
    mut params: TwoStreamModelParams,
    data: &[SampleWindow],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let model = params.config.clone();
    check_windows(&model, data)?;
    config.validate(&model)?;
    let batch_size = config.batch_size.min(data.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.dropout_seed);
    let mut cursor = data.len();
    let mut adam = AdamState::new(params.tensors());
    let mut log = TrainLog::default();

    for step in 0..config.steps {
        let started = Instant::now();
        if cursor + batch_size > data.len() {
            order.shuffle(&mut shuffle_rng);
            cursor = 0;
        }
        let batch: Vec<&SampleWindow> = order[cursor..cursor + batch_size].iter().map(|&i| &data[i]).collect();
        cursor += batch_size;

        let mut tape = Tape::new();
        let vars = ModelVars::register(&mut tape, &params, true)?;
        let loss = batch_loss(
            &mut tape,
            &vars,
            &batch,
            &config.frame_weights,
            ForwardOptions::training(),
            &mut dropout_rng,
        )
        .map_err(|e| match e {
            TrainError::Tensor(TensorError::NonFinite { .. })
            | TrainError::Network(NetworkError::Tensor(TensorError::NonFinite { .. })) => {
                TrainError::NonFinite { step }
            }
            other => other,
        })?;
        let loss_value = tape.value(loss).item().expect("scalar loss");
        if !loss_value.is_finite() {
            return Err(TrainError::NonFinite { step });
        }
        let grads = tape.backward(loss)?;
        let grads: Vec<Tensor> = vars.vars().into_iter().map(|v| grads.get(v)).collect();
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFinite { step });
        }
        adam_step(&mut params.tensors_mut(), &grads, &mut adam, &config.adam)?;

        log.records.push(StepRecord {
            step,
            loss: loss_value,
            millis: started.elapsed().as_millis(),
        });
        log::debug!("step {step} loss {loss_value:e}");
        if let (Some(every), Some(path)) = (config.checkpoint_every, &config.checkpoint_path) {
            if (step + 1) % every == 0 || step + 1 == config.steps {
                save_checkpoint(&params, path)?;
            }
        }
    }
    Ok(TrainOutcome { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{generate_synthetic, window_dataset, SynthParams};
    use crate::network::FusionMode;
    use rand::Rng;

    #[test]
    fn frame_weights() {
        let w = make_frame_weights(30, 22, 0.2).unwrap();
        assert_eq!(&w[..8], &[1.0; 8]);
        assert_eq!(&w[8..], &[0.2; 22]);
        assert_eq!(make_frame_weights(5, 0, 0.2).unwrap(), vec![1.0; 5]);
        assert_eq!(make_frame_weights(5, 5, 0.2).unwrap(), vec![0.2; 5]);
        assert!(make_frame_weights(5, 6, 0.2).is_err());
        assert!(make_frame_weights(5, 2, 0.0).is_err());
    }

    #[test]
    fn loss_examples() {
        let t = Tensor::from_fn(&[2, 3, 3], |i| i as f64);
        assert_eq!(weighted_loss(&t, &t, &[1.0, 1.0]).unwrap(), 0.0);
        let pred = Tensor::new(vec![1, 1, 3], vec![3.0, 4.0, 0.0]).unwrap();
        assert_eq!(weighted_loss(&pred, &Tensor::zeros(&[1, 1, 3]), &[1.0]).unwrap(), 25.0);
        assert!(weighted_loss(&pred, &Tensor::zeros(&[1, 2, 3]), &[1.0]).is_err());
        assert!(weighted_loss(&pred, &Tensor::zeros(&[1, 1, 3]), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn loss_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (t_out, n) = (7, 6);
        let p = Tensor::from_fn(&[t_out, n, 3], |_| rng.gen_range(-50.0..50.0));
        let q = Tensor::from_fn(&[t_out, n, 3], |_| rng.gen_range(-50.0..50.0));
        let w: Vec<f64> = (0..t_out).map(|_| rng.gen_range(0.1..2.0)).collect();
        let mut oracle = 0.0;
        for (t, &wt) in w.iter().enumerate() {
            for k in 0..n {
                let mut sq = 0.0;
                for d in 0..3 {
                    let diff = p.at(&[t, k, d]) - q.at(&[t, k, d]);
                    sq += diff * diff;
                }
                oracle += wt * sq;
            }
        }
        oracle /= (t_out * n) as f64;
        assert!((weighted_loss(&p, &q, &w).unwrap() - oracle).abs() < 1e-9);
    }

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            joints: 3,
            t_in: 4,
            t_out: 2,
            hidden: 4,
            depth: 6,
            dropout: 0.0,
            fusion: FusionMode::TemporalFusion,
            seed: 1,
            ..ModelConfig::default()
        }
    }

    fn drift_windows(model: &ModelConfig, count: usize) -> Vec<SampleWindow> {
        let seq = generate_synthetic(&SynthParams::pure_drift(model.joints, 40, 25.0, [1.0, 0.5, 0.0])).unwrap();
        window_dataset(&seq, model.t_in, model.t_out, 1)
            .unwrap()
            .into_iter()
            .take(count)
            .collect()
    }

    #[test]
    fn exact_fit_is_a_fixed_point() {
        let model = tiny_model();
        let params = TwoStreamModelParams::zeros(&model).unwrap();
        let mut data = drift_windows(&model, 4);
        for w in &mut data {
            w.target = Tensor::zeros(w.target.shape());
        }
        let out = train_from(params.clone(), &data, &TrainConfig::new(1, model.t_out)).unwrap();
        assert_eq!(out.log.records[0].loss, 0.0);
        assert_eq!(out.params, params);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let model = ModelConfig {
            dropout: 0.2,
            ..tiny_model()
        };
        let data = drift_windows(&model, 6);
        let mut cfg = TrainConfig::new(5, model.t_out);
        cfg.batch_size = 4;
        cfg.shuffle_seed = 3;
        cfg.dropout_seed = 4;
        let a = train(&model, &data, &cfg).unwrap();
        let b = train(&model, &data, &cfg).unwrap();
        assert_eq!(a.log.loss_trace_csv(), b.log.loss_trace_csv());
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = tiny_model();
        let cfg = TrainConfig::new(1, model.t_out);
        assert!(matches!(train(&model, &[], &cfg), Err(TrainError::EmptyDataset)));
        let other = ModelConfig {
            joints: 4,
            ..model.clone()
        };
        assert!(matches!(
            train(&model, &drift_windows(&other, 2), &cfg),
            Err(TrainError::Shape(_))
        ));
        let mut bad = cfg.clone();
        bad.frame_weights = vec![1.0];
        assert!(train(&model, &drift_windows(&model, 2), &bad).is_err());
    }

    #[test]
    fn huge_learning_rate_reports_non_finite_step() {
        let model = tiny_model();
        let mut data = drift_windows(&model, 2);
        for w in &mut data {
            w.target = Tensor::full(w.target.shape(), 1e200);
        }
        let err = train(&model, &data, &TrainConfig::new(3, model.t_out)).unwrap_err();
        assert!(matches!(err, TrainError::NonFinite { step: 0 }), "{err}");
    }

    #[test]
    fn disjoint_check() {
        let model = tiny_model();
        let data = drift_windows(&model, 6);
        assert!(check_disjoint(&data[..3], &data[3..]).is_ok());
        assert!(matches!(
            check_disjoint(&data[..4], &data[3..]),
            Err(TrainError::Overlap(_))
        ));
    }

    #[test]
    fn writes_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let model = tiny_model();
        let mut cfg = TrainConfig::new(3, model.t_out);
        cfg.checkpoint_every = Some(2);
        cfg.checkpoint_path = Some(path.clone());
        let out = train(&model, &drift_windows(&model, 3), &cfg).unwrap();
        assert_eq!(crate::network::load_checkpoint(&path).unwrap(), out.params);
    }
}
