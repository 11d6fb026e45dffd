use rand::Rng;

use super::config::{ModelConfig, N_RESIDUAL_BLOCKS};
use crate::error::{invalid, Result};
use crate::rng::{SeedStreams, Stream};
use crate::tensor::{BatchMoments, Element, Tensor, BN_MOMENTUM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Weight,
    Bias,
    NormScale,
    NormShift,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    pub fn is_learnable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }

    /// Only convolution and linear weights receive weight decay.
    pub fn decays(self) -> bool {
        self == ParamKind::Weight
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<E: Element> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<E>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LinearSlots {
    pub weight: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BatchNormSlots {
    pub gamma: usize,
    pub beta: usize,
    pub mean: usize,
    pub var: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BlockSlots {
    pub conv: LinearSlots,
    pub bn: BatchNormSlots,
    pub pointwise: LinearSlots,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct GtcSlots {
    pub projection: LinearSlots,
    pub blocks: Vec<BlockSlots>,
    pub norm_gamma: usize,
    pub norm_beta: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct MlpSlots {
    pub fc: [LinearSlots; 3],
    pub bn: [BatchNormSlots; 2],
}

/// Index of every named tensor inside [`ModelParams::tensors`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub gtc: Option<GtcSlots>,
    pub mlp: MlpSlots,
}

/// How a freshly created tensor is filled.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Fill {
    Uniform { fan_in: usize },
    Zeros,
    Ones,
}

/// Shape specification of one parameter tensor, in canonical order.
#[derive(Debug, Clone)]
pub(crate) struct SlotSpec {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub fill: Fill,
}

struct LayoutBuilder {
    specs: Vec<SlotSpec>,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, kind: ParamKind, shape: Vec<usize>, fill: Fill) -> usize {
        self.specs.push(SlotSpec { name, kind, shape, fill });
        self.specs.len() - 1
    }

    fn conv(&mut self, prefix: &str, out: usize, per_group: usize, kernel: usize) -> LinearSlots {
        let weight = self.push(
            format!("{prefix}.weight"),
            ParamKind::Weight,
            vec![out, per_group, kernel],
            Fill::Uniform { fan_in: per_group * kernel },
        );
        let bias = self.push(format!("{prefix}.bias"), ParamKind::Bias, vec![out], Fill::Zeros);
        LinearSlots { weight, bias }
    }

    fn linear(&mut self, prefix: &str, out: usize, features: usize) -> LinearSlots {
        let weight = self.push(
            format!("{prefix}.weight"),
            ParamKind::Weight,
            vec![out, features],
            Fill::Uniform { fan_in: features },
        );
        let bias = self.push(format!("{prefix}.bias"), ParamKind::Bias, vec![out], Fill::Zeros);
        LinearSlots { weight, bias }
    }

    fn batchnorm(&mut self, prefix: &str, features: usize) -> BatchNormSlots {
        BatchNormSlots {
            gamma: self.push(format!("{prefix}.gamma"), ParamKind::NormScale, vec![features], Fill::Ones),
            beta: self.push(format!("{prefix}.beta"), ParamKind::NormShift, vec![features], Fill::Zeros),
            mean: self.push(format!("{prefix}.running_mean"), ParamKind::RunningMean, vec![features], Fill::Zeros),
            var: self.push(format!("{prefix}.running_var"), ParamKind::RunningVar, vec![features], Fill::Ones),
        }
    }
}

impl Layout {
    pub(crate) fn build(config: &ModelConfig) -> (Layout, Vec<SlotSpec>) {
        let mut b = LayoutBuilder { specs: Vec::new() };
        let gtc = config.variant.uses_gtc().then(|| {
            let channels = config.stage_channels();
            let maps = config.feature_maps();
            let projection = b.conv("gtc.projection", maps, 1, 1);
            let blocks = (0..N_RESIDUAL_BLOCKS)
                .map(|i| {
                    let prefix = format!("gtc.block{i}");
                    BlockSlots {
                        conv: b.conv(&format!("{prefix}.conv"), maps, 1, config.kernel_size),
                        bn: b.batchnorm(&format!("{prefix}.bn"), maps),
                        pointwise: b.conv(
                            &format!("{prefix}.pointwise"),
                            maps,
                            maps / config.pointwise_group_count(),
                            1,
                        ),
                    }
                })
                .collect();
            let norm_gamma = b.push(
                "gtc.norm.gamma".into(),
                ParamKind::NormScale,
                vec![channels, config.hidden_depth],
                Fill::Ones,
            );
            let norm_beta = b.push(
                "gtc.norm.beta".into(),
                ParamKind::NormShift,
                vec![channels, config.hidden_depth],
                Fill::Zeros,
            );
            GtcSlots { projection, blocks, norm_gamma, norm_beta }
        });
        let (m, half) = (config.mlp_hidden, config.mlp_hidden / 2);
        let fc1 = b.linear("mlp.fc1", m, config.embedding_dim());
        let bn1 = b.batchnorm("mlp.bn1", m);
        let fc2 = b.linear("mlp.fc2", half, m);
        let bn2 = b.batchnorm("mlp.bn2", half);
        let fc3 = b.linear("mlp.fc3", config.n_classes, half);
        let mlp = MlpSlots { fc: [fc1, fc2, fc3], bn: [bn1, bn2] };
        (Layout { gtc, mlp }, b.specs)
    }
}

/// All tensors of one network: learnable parameters plus batch-norm running
/// statistics, stored in a fixed canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<E: Element> {
    config: ModelConfig,
    tensors: Vec<ParamTensor<E>>,
    pub(crate) layout: Layout,
}

impl<E: Element> ModelParams<E> {
    /// Fan-in uniform initialization, fully determined by `config` and `seed`.
    ///
    /// Weights are drawn from `U(-sqrt(1/fan_in), sqrt(1/fan_in))`, biases and
    /// norm shifts are zero, norm scales one.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeedStreams::new(seed).rng(Stream::Weights, 0);
        let (layout, specs) = Layout::build(config);
        let tensors = specs
            .into_iter()
            .map(|spec| {
                let n: usize = spec.shape.iter().product();
                let data: Vec<E> = match spec.fill {
                    Fill::Uniform { fan_in } => {
                        let bound = (1.0 / fan_in as f64).sqrt();
                        (0..n).map(|_| E::from_f64(rng.random_range(-bound..bound))).collect()
                    }
                    Fill::Zeros => vec![E::from_f64(0.0); n],
                    Fill::Ones => vec![E::from_f64(1.0); n],
                };
                ParamTensor { name: spec.name, kind: spec.kind, value: Tensor::new(&spec.shape, data).unwrap() }
            })
            .collect();
        Ok(Self { config: config.clone(), tensors, layout })
    }

    /// Assemble from explicit tensors, checking names, kinds and shapes
    /// against the layout implied by `config`.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<ParamTensor<E>>) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = Layout::build(config);
        if specs.len() != tensors.len() {
            return Err(invalid(format!("expected {} parameter tensors, got {}", specs.len(), tensors.len())));
        }
        for (spec, t) in specs.iter().zip(&tensors) {
            if spec.name != t.name || spec.kind != t.kind || spec.shape != t.value.shape() {
                return Err(invalid(format!(
                    "parameter {} {:?} does not match expected {} {:?}",
                    t.name,
                    t.value.shape(),
                    spec.name,
                    spec.shape
                )));
            }
        }
        Ok(Self { config: config.clone(), tensors, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[ParamTensor<E>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<E>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<E>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor<E>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub(crate) fn slot(&self, idx: usize) -> &Tensor<E> {
        &self.tensors[idx].value
    }

    /// Number of learnable scalars.
    pub fn learnable_count(&self) -> usize {
        self.tensors.iter().filter(|t| t.kind.is_learnable()).map(|t| t.value.numel()).sum()
    }

    /// Fold one training batch's statistics into the running estimates of
    /// the batch norm whose running-mean slot is `mean_slot`.
    pub(crate) fn absorb_moments(&mut self, mean_slot: usize, var_slot: usize, moments: &BatchMoments) {
        let (lo, hi) = self.tensors.split_at_mut(var_slot);
        moments.update_running(lo[mean_slot].value.data_mut(), hi[0].value.data_mut(), BN_MOMENTUM);
    }

    pub fn cast<F: Element>(&self) -> ModelParams<F> {
        ModelParams {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor { name: t.name.clone(), kind: t.kind, value: t.value.cast() })
                .collect(),
            layout: self.layout.clone(),
        }
    }
}

/// Learnable-parameter counts per stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamBreakdown {
    /// The bidirectional delta front end has no parameters.
    pub delta: usize,
    pub projection: usize,
    pub residual_blocks: usize,
    pub layer_norm: usize,
    pub mlp: usize,
}

impl ParamBreakdown {
    pub fn total(&self) -> usize {
        self.delta + self.projection + self.residual_blocks + self.layer_norm + self.mlp
    }
}

/// Closed-form learnable-parameter count per stage.
pub fn param_breakdown(config: &ModelConfig) -> ParamBreakdown {
    let mut out = ParamBreakdown { delta: 0, projection: 0, residual_blocks: 0, layer_norm: 0, mlp: 0 };
    if config.variant.uses_gtc() {
        let w = config.feature_maps();
        let k = config.kernel_size;
        let pw_in = w / config.pointwise_group_count();
        out.projection = w + w;
        let per_block = (w * k + w) + 2 * w + (w * pw_in + w);
        out.residual_blocks = N_RESIDUAL_BLOCKS * per_block;
        out.layer_norm = 2 * w;
    }
    let (f, m, h, n) = (config.embedding_dim(), config.mlp_hidden, config.mlp_hidden / 2, config.n_classes);
    out.mlp = (f * m + m) + 2 * m + (m * h + h) + 2 * h + (h * n + n);
    out
}

pub fn param_count(config: &ModelConfig) -> usize {
    param_breakdown(config).total()
}
