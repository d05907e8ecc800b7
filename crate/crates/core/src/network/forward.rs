use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ConvLayer, TSTParams, TwoStreamModelParams};
use super::{FusionMode, ModelConfig, NetworkError, Result, TSTConfig};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug)]
struct LayerVars {
    kernel: Var,
    bias: Var,
}

impl LayerVars {
    fn register(tape: &mut Tape, layer: &ConvLayer, trainable: bool) -> Result<Self> {
        let mut leaf = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        Ok(Self {
            kernel: leaf(&layer.kernel)?,
            bias: leaf(&layer.bias)?,
        })
    }

    fn apply(&self, tape: &mut Tape, x: Var, padding: usize) -> Result<Var> {
        Ok(tape.conv2d(x, self.kernel, self.bias, 1, padding)?)
    }
}

/// A TST block's parameters registered on a tape.
#[derive(Clone, Debug)]
pub struct TstVars {
    config: TSTConfig,
    layers: Vec<LayerVars>,
    skips: Vec<(usize, usize, LayerVars)>,
}

impl TstVars {
    pub fn register(tape: &mut Tape, params: &TSTParams, trainable: bool) -> Result<Self> {
        let layers = params
            .layers
            .iter()
            .map(|l| LayerVars::register(tape, l, trainable))
            .collect::<Result<_>>()?;
        let skips = params
            .skips
            .iter()
            .map(|s| Ok((s.from, s.to, LayerVars::register(tape, &s.conv, trainable)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            config: params.config,
            layers,
            skips,
        })
    }

    /// Layer kernels and biases, then skip kernels and biases.
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers
            .iter()
            .chain(self.skips.iter().map(|(_, _, l)| l))
            .flat_map(|l| [l.kernel, l.bias])
    }
}

/// All model parameters registered on a tape, mirroring [`TwoStreamModelParams`].
#[derive(Clone, Debug)]
pub struct ModelVars {
    config: ModelConfig,
    p_tst: TstVars,
    v_tst: TstVars,
    selectors: Vec<LayerVars>,
    mixer: Option<LayerVars>,
    reinf_tst: Option<TstVars>,
}

impl ModelVars {
    /// Registers every tensor as a trainable leaf (or a constant when `trainable` is false).
    pub fn register(tape: &mut Tape, params: &TwoStreamModelParams, trainable: bool) -> Result<Self> {
        Ok(Self {
            config: params.config.clone(),
            p_tst: TstVars::register(tape, &params.p_tst, trainable)?,
            v_tst: TstVars::register(tape, &params.v_tst, trainable)?,
            selectors: params
                .selectors
                .iter()
                .map(|s| LayerVars::register(tape, s, trainable))
                .collect::<Result<_>>()?,
            mixer: params
                .mixer
                .as_ref()
                .map(|m| LayerVars::register(tape, m, trainable))
                .transpose()?,
            reinf_tst: params
                .reinf_tst
                .as_ref()
                .map(|r| TstVars::register(tape, r, trainable))
                .transpose()?,
        })
    }

    /// Variables in the canonical parameter order.
    pub fn vars(&self) -> Vec<Var> {
        self.p_tst
            .vars()
            .chain(self.v_tst.vars())
            .chain(self.selectors.iter().flat_map(|l| [l.kernel, l.bias]))
            .chain(self.mixer.iter().flat_map(|l| [l.kernel, l.bias]))
            .chain(self.reinf_tst.iter().flat_map(|r| r.vars()))
            .collect()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions {
    pub training: bool,
    /// Skip the reinforcement TST so the fused output is the raw fusion result.
    pub bypass_reinforcement: bool,
}

impl ForwardOptions {
    pub fn training() -> Self {
        Self {
            training: true,
            ..Self::default()
        }
    }

    pub fn inference() -> Self {
        Self::default()
    }
}

/// Tape handles for the fused prediction and its intermediates, each `[t_out, joints, 3]`.
#[derive(Clone, Copy, Debug)]
pub struct Prediction {
    pub fused: Var,
    pub p_pred: Var,
    pub v_pred: Var,
    pub pre_reinforcement: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionValues {
    pub fused: Tensor,
    pub p_pred: Tensor,
    pub v_pred: Tensor,
    pub pre_reinforcement: Tensor,
}

/// Stack of 3x3 stride-1 padding-1 convolutions with 1x1 skips; maps `[c_in, H, W]` to `[c_out, H, W]`.
///
/// Skips are added to the destination layer's pre-activation. Every layer but
/// the last is followed by leaky ReLU and dropout.
pub fn tst_forward(tape: &mut Tape, block: &TstVars, x: Var, training: bool, rng: &mut ChaCha8Rng) -> Result<Var> {
    let cfg = &block.config;
    let shape = tape.shape(x);
    if shape.len() != 3 || shape[0] != cfg.c_in {
        return Err(NetworkError::Shape(format!(
            "TST expects [{}, H, W] input, got {shape:?}",
            cfg.c_in
        )));
    }
    let mut boundaries = Vec::with_capacity(cfg.depth + 1);
    boundaries.push(x);
    for (k, layer) in (1..=cfg.depth).zip(&block.layers) {
        let mut z = layer.apply(tape, boundaries[k - 1], 1)?;
        for (from, _, skip) in block.skips.iter().filter(|(_, to, _)| *to == k) {
            let projected = skip.apply(tape, boundaries[*from], 0)?;
            z = tape.add(z, projected)?;
        }
        if k < cfg.depth {
            let a = tape.leaky_relu(z, cfg.slope)?;
            z = tape.dropout(a, cfg.dropout, training, rng)?;
        }
        boundaries.push(z);
    }
    Ok(boundaries[cfg.depth])
}

fn check_window(tape: &Tape, cfg: &ModelConfig, positions: Var) -> Result<()> {
    let expected = [cfg.t_in, cfg.joints, 3];
    if tape.shape(positions) != expected {
        return Err(NetworkError::Shape(format!(
            "expected input {expected:?}, got {:?}",
            tape.shape(positions)
        )));
    }
    Ok(())
}

/// Position stream: absolute poses in, absolute poses out.
pub fn pstream_forward(
    tape: &mut Tape,
    vars: &ModelVars,
    positions: Var,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Var> {
    check_window(tape, &vars.config, positions)?;
    tst_forward(tape, &vars.p_tst, positions, training, rng)
}

/// Velocity stream: differences the input, predicts `t_out` displacements and
/// accumulates them onto the last observed pose.
pub fn vstream_forward(
    tape: &mut Tape,
    vars: &ModelVars,
    positions: Var,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Var> {
    check_window(tape, &vars.config, positions)?;
    let velocities = tape.frame_diff(positions)?;
    let predicted = tst_forward(tape, &vars.v_tst, velocities, training, rng)?;
    Ok(tape.recover_positions(predicted, positions, vars.config.t_in - 1)?)
}

/// Fuses the stream predictions according to the configured mode.
///
/// Returns `(pre_reinforcement, fused)`. For temporal fusion, step `i` of the
/// pre-reinforcement tensor depends only on step `i` of each stream.
pub fn temporal_fusion(
    tape: &mut Tape,
    vars: &ModelVars,
    p_pred: Var,
    v_pred: Var,
    options: ForwardOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(Var, Var)> {
    let cfg = &vars.config;
    let expected = [cfg.t_out, cfg.joints, 3];
    for v in [p_pred, v_pred] {
        if tape.shape(v) != expected {
            return Err(NetworkError::Shape(format!(
                "stream prediction {:?}, expected {expected:?}",
                tape.shape(v)
            )));
        }
    }
    let pre = match cfg.fusion {
        FusionMode::POnly => return Ok((p_pred, p_pred)),
        FusionMode::VOnly => return Ok((v_pred, v_pred)),
        FusionMode::Addition => tape.add(p_pred, v_pred)?,
        FusionMode::NaiveConcat => {
            let mixer = vars
                .mixer
                .ok_or_else(|| NetworkError::Config("naive-concat model without mixer".into()))?;
            let both = tape.concat_channels(&[p_pred, v_pred])?;
            mixer.apply(tape, both, 0)?
        }
        FusionMode::TemporalFusion => {
            if vars.selectors.len() != cfg.t_out {
                return Err(NetworkError::Config(format!(
                    "{} selectors for {} predicted frames",
                    vars.selectors.len(),
                    cfg.t_out
                )));
            }
            let mut steps = Vec::with_capacity(cfg.t_out);
            for (i, selector) in vars.selectors.iter().enumerate() {
                let p = tape.slice_channels(p_pred, i, 1)?;
                let v = tape.slice_channels(v_pred, i, 1)?;
                let pair = tape.concat_channels(&[p, v])?;
                steps.push(selector.apply(tape, pair, 0)?);
            }
            tape.concat_channels(&steps)?
        }
    };
    if options.bypass_reinforcement {
        return Ok((pre, pre));
    }
    let reinf = vars
        .reinf_tst
        .as_ref()
        .ok_or_else(|| NetworkError::Config(format!("{} model without reinforcement TST", cfg.fusion)))?;
    let fused = tst_forward(tape, reinf, pre, options.training, rng)?;
    Ok((pre, fused))
}

pub fn model_forward(
    tape: &mut Tape,
    vars: &ModelVars,
    positions: Var,
    options: ForwardOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Prediction> {
    let p_pred = pstream_forward(tape, vars, positions, options.training, rng)?;
    let v_pred = vstream_forward(tape, vars, positions, options.training, rng)?;
    let (pre_reinforcement, fused) = temporal_fusion(tape, vars, p_pred, v_pred, options, rng)?;
    Ok(Prediction {
        fused,
        p_pred,
        v_pred,
        pre_reinforcement,
    })
}

/// Inference-mode forward pass on a fresh tape.
pub fn predict(params: &TwoStreamModelParams, positions: &Tensor) -> Result<PredictionValues> {
    predict_with(params, positions, ForwardOptions::inference())
}

pub(crate) fn predict_with(
    params: &TwoStreamModelParams,
    positions: &Tensor,
    options: ForwardOptions,
) -> Result<PredictionValues> {
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, params, false)?;
    let x = tape.constant(positions.clone())?;
    // Unused unless `options.training` is set.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = model_forward(&mut tape, &vars, x, options, &mut rng)?;
    Ok(PredictionValues {
        fused: tape.value(out.fused).clone(),
        p_pred: tape.value(out.p_pred).clone(),
        v_pred: tape.value(out.v_pred).clone(),
        pre_reinforcement: tape.value(out.pre_reinforcement).clone(),
    })
}
