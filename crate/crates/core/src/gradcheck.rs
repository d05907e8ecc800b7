//! Central finite differences against tape gradients for a whole model.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{
    init_params, model_forward, predict, ForwardOptions, FusionMode, ModelConfig, ModelVars, NetworkError,
    TwoStreamModelParams,
};
use crate::tensor::{Tape, Tensor};
use crate::training::weighted_loss;

pub const FD_STEP: f64 = 1e-5;
/// Step used to tell an activation kink inside `±FD_STEP` from a wrong gradient.
pub const KINK_PROBE_STEP: f64 = 1e-7;
pub const TOLERANCE: f64 = 1e-3;
/// Gradients smaller than this in both routes are compared absolutely; below it
/// central differences at `FD_STEP` are dominated by rounding in the loss.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

/// The model the gradient suite runs on: 5 joints, 4 input frames, 3 predicted, width 8, depth 11.
pub fn small_config(seed: u64) -> ModelConfig {
    ModelConfig {
        joints: 5,
        t_in: 4,
        t_out: 3,
        hidden: 8,
        depth: 11,
        dropout: 0.0,
        fusion: FusionMode::TemporalFusion,
        seed,
        ..ModelConfig::default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupResult {
    pub group: &'static str,
    pub checked: usize,
    /// Largest error over entries that are not kinks.
    pub max_rel_error: f64,
    /// Entries that fail at `FD_STEP` but pass at `KINK_PROBE_STEP`: the
    /// finite-difference step crossed a leaky-ReLU corner.
    pub kinks: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupResult>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn kinks(&self) -> usize {
        self.groups.iter().map(|g| g.kinks).sum()
    }

    pub fn group(&self, name: &str) -> Option<&GroupResult> {
        self.groups.iter().find(|g| g.group == name)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Checks `per_group` randomly chosen entries of every parameter group (all entries when `None`).
///
/// The loss is the unit-weighted squared error of the fused output against a
/// random target, on a random input in `[-2, 2]`, with dropout off.
pub fn gradient_check(
    config: &ModelConfig,
    seed: u64,
    per_group: Option<usize>,
) -> Result<GradCheckReport, NetworkError> {
    let params = init_params(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = Tensor::from_fn(&[config.t_in, config.joints, 3], |_| rng.gen_range(-2.0..2.0));
    let target = Tensor::from_fn(&[config.t_out, config.joints, 3], |_| rng.gen_range(-2.0..2.0));
    let weights = vec![1.0; config.t_out];

    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, &params, true)?;
    let x = tape.constant(input.clone())?;
    let t = tape.constant(target.clone())?;
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let out = model_forward(&mut tape, &vars, x, ForwardOptions::inference(), &mut unused)?;
    let loss = tape.weighted_sq_error(out.fused, t, &weights)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.vars().into_iter().map(|v| grads.get(v)).collect();

    let loss_at = |p: &TwoStreamModelParams| -> Result<f64, NetworkError> {
        let fused = predict(p, &input)?.fused;
        Ok(weighted_loss(&fused, &target, &weights).expect("shapes checked"))
    };

    let mut by_group: BTreeMap<&'static str, Vec<(usize, usize)>> = BTreeMap::new();
    for (ti, (group, tensor)) in params.tensor_groups().into_iter().zip(params.tensors()).enumerate() {
        let entries = by_group.entry(group).or_default();
        entries.extend((0..tensor.numel()).map(|k| (ti, k)));
    }

    let mut groups = Vec::new();
    for (group, mut entries) in by_group {
        if let Some(n) = per_group {
            // Partial Fisher-Yates: the first n entries become a uniform sample.
            let n = n.min(entries.len());
            for i in 0..n {
                let j = rng.gen_range(i..entries.len());
                entries.swap(i, j);
            }
            entries.truncate(n);
        }
        let mut worst: f64 = 0.0;
        let mut kinks = 0;
        let mut probe = params.clone();
        for &(ti, k) in &entries {
            let original = params.tensors()[ti].data()[k];
            let mut central = |h: f64| -> Result<f64, NetworkError> {
                probe.tensors_mut()[ti].data_mut()[k] = original + h;
                let plus = loss_at(&probe)?;
                probe.tensors_mut()[ti].data_mut()[k] = original - h;
                let minus = loss_at(&probe)?;
                probe.tensors_mut()[ti].data_mut()[k] = original;
                Ok((plus - minus) / (2.0 * h))
            };
            let a = analytic[ti].data()[k];
            let err = relative_error(a, central(FD_STEP)?);
            if err >= TOLERANCE && relative_error(a, central(KINK_PROBE_STEP)?) < TOLERANCE {
                kinks += 1;
            } else {
                worst = worst.max(err);
            }
        }
        groups.push(GroupResult {
            group,
            checked: entries.len(),
            max_rel_error: worst,
            kinks,
        });
    }
    Ok(GradCheckReport { groups })
}
