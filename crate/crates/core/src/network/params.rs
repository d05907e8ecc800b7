use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FusionMode, ModelConfig, Result, TSTConfig};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub kernel: Tensor,
    pub bias: Tensor,
}

impl ConvLayer {
    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> Self {
        Self {
            kernel: Tensor::zeros(&[c_out, c_in, k, k]),
            bias: Tensor::zeros(&[c_out]),
        }
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        let s = self.kernel.shape();
        let bound = (1.0 / (s[1] * s[2] * s[3]) as f64).sqrt();
        for v in self.kernel.data_mut() {
            *v = rng.gen_range(-bound..bound);
        }
    }
}

/// 1x1 projection from layer boundary `from` onto the pre-activation of layer `to`.
#[derive(Clone, Debug, PartialEq)]
pub struct Skip {
    pub from: usize,
    pub to: usize,
    pub conv: ConvLayer,
}

/// Residual wiring: every pair among {input, each 5th layer, last layer}.
///
/// Boundary 0 is the block input and boundary `k` the output of layer `k`.
/// Pairs are ordered by destination, then source; depth 11 yields six skips.
pub fn skip_endpoints(depth: usize) -> Vec<(usize, usize)> {
    let mut points: Vec<usize> = std::iter::once(0).chain((5..depth).step_by(5)).collect();
    points.push(depth);
    let mut pairs = Vec::new();
    for (i, &to) in points.iter().enumerate().skip(1) {
        for &from in &points[..i] {
            pairs.push((from, to));
        }
    }
    pairs
}

#[derive(Clone, Debug, PartialEq)]
pub struct TSTParams {
    pub config: TSTConfig,
    /// `depth` 3x3 layers; layer `k` (1-based) is `layers[k - 1]`.
    pub layers: Vec<ConvLayer>,
    pub skips: Vec<Skip>,
}

impl TSTParams {
    pub fn zeros(config: TSTConfig) -> Result<Self> {
        config.validate()?;
        let layers = (1..=config.depth)
            .map(|k| ConvLayer::zeros(config.channels_at(k), config.channels_at(k - 1), 3))
            .collect();
        let skips = skip_endpoints(config.depth)
            .into_iter()
            .map(|(from, to)| Skip {
                from,
                to,
                conv: ConvLayer::zeros(config.channels_at(to), config.channels_at(from), 1),
            })
            .collect();
        Ok(Self { config, layers, skips })
    }

    fn conv_layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.layers.iter().chain(self.skips.iter().map(|s| &s.conv))
    }

    fn conv_layers_mut(&mut self) -> impl Iterator<Item = &mut ConvLayer> {
        self.layers.iter_mut().chain(self.skips.iter_mut().map(|s| &mut s.conv))
    }
}

/// All learnable tensors of the two-stream model.
///
/// Canonical tensor order (checkpoints, optimizer state, gradients): P-stream
/// layers then skips, V-stream layers then skips, selectors `0..t_out`, the
/// naive-concat mixer, then reinforcement layers and skips. Each layer
/// contributes its kernel followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStreamModelParams {
    pub config: ModelConfig,
    pub p_tst: TSTParams,
    pub v_tst: TSTParams,
    /// `t_out` selectors with kernels `[1, 2, 1, 1]`; temporal fusion only.
    pub selectors: Vec<ConvLayer>,
    /// `[t_out, 2 * t_out, 1, 1]` mixer; naive concatenation only.
    pub mixer: Option<ConvLayer>,
    pub reinf_tst: Option<TSTParams>,
}

impl TwoStreamModelParams {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let selectors = if config.fusion == FusionMode::TemporalFusion {
            (0..config.t_out).map(|_| ConvLayer::zeros(1, 2, 1)).collect()
        } else {
            Vec::new()
        };
        let mixer =
            (config.fusion == FusionMode::NaiveConcat).then(|| ConvLayer::zeros(config.t_out, 2 * config.t_out, 1));
        let reinf_tst = if config.fusion.has_reinforcement() {
            Some(TSTParams::zeros(config.reinf_config())?)
        } else {
            None
        };
        Ok(Self {
            config: config.clone(),
            p_tst: TSTParams::zeros(config.p_config())?,
            v_tst: TSTParams::zeros(config.v_config())?,
            selectors,
            mixer,
            reinf_tst,
        })
    }

    fn conv_layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.p_tst
            .conv_layers()
            .chain(self.v_tst.conv_layers())
            .chain(&self.selectors)
            .chain(&self.mixer)
            .chain(self.reinf_tst.iter().flat_map(|r| r.conv_layers()))
    }

    fn conv_layers_mut(&mut self) -> impl Iterator<Item = &mut ConvLayer> {
        self.p_tst
            .conv_layers_mut()
            .chain(self.v_tst.conv_layers_mut())
            .chain(&mut self.selectors)
            .chain(&mut self.mixer)
            .chain(self.reinf_tst.iter_mut().flat_map(|r| r.conv_layers_mut()))
    }

    /// Tensors in canonical order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.conv_layers().flat_map(|l| [&l.kernel, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.conv_layers_mut()
            .flat_map(|l| [&mut l.kernel, &mut l.bias])
            .collect()
    }

    /// Group name of each tensor returned by [`Self::tensors`].
    pub fn tensor_groups(&self) -> Vec<&'static str> {
        fn block(p: &TSTParams, kernels: &'static str, out: &mut Vec<&'static str>) {
            for _ in &p.layers {
                out.extend([kernels, "biases"]);
            }
            for _ in &p.skips {
                out.extend(["skip kernels", "biases"]);
            }
        }
        let mut out = Vec::new();
        block(&self.p_tst, "p_tst kernels", &mut out);
        block(&self.v_tst, "v_tst kernels", &mut out);
        for _ in &self.selectors {
            out.extend(["selectors", "selectors"]);
        }
        if self.mixer.is_some() {
            out.extend(["mixer", "mixer"]);
        }
        if let Some(r) = &self.reinf_tst {
            block(r, "reinf_tst kernels", &mut out);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }
}

/// Kernels uniform in `±sqrt(1 / fan_in)`, biases zero, drawn in canonical order from `config.seed`.
pub fn init_params(config: &ModelConfig) -> Result<TwoStreamModelParams> {
    let mut params = TwoStreamModelParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for layer in params.conv_layers_mut() {
        layer.init(&mut rng);
    }
    Ok(params)
}
