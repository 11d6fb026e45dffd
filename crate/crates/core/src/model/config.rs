use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Number of stacked residual blocks in the temporal convolution stage.
pub const N_RESIDUAL_BLOCKS: usize = 2;

/// Which stages of the network are active. `Full` is the complete model; the
/// others exist for module ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// flatten raw input -> MLP
    MlpOnly,
    /// delta -> flatten -> MLP
    DeltaMlp,
    /// temporal convolution on the raw input -> MLP
    GtcMlp,
    /// delta -> temporal convolution -> MLP
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::MlpOnly, Variant::DeltaMlp, Variant::GtcMlp, Variant::Full];

    pub fn uses_delta(self) -> bool {
        matches!(self, Variant::DeltaMlp | Variant::Full)
    }

    pub fn uses_gtc(self) -> bool {
        matches!(self, Variant::GtcMlp | Variant::Full)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::MlpOnly => "mlp_only",
            Variant::DeltaMlp => "delta_mlp",
            Variant::GtcMlp => "gtc_mlp",
            Variant::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| invalid(format!("unknown variant {s:?} (expected mlp_only, delta_mlp, gtc_mlp or full)")))
    }
}

/// Grouping of the 1x1 convolution inside each residual block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointwiseGroups {
    /// One group per input channel: mixes only that channel's depth features.
    PerChannel,
    /// A single group: mixes every feature map.
    Full,
}

impl PointwiseGroups {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "per_channel" | "2c" | "2C" => Ok(Self::PerChannel),
            "full" | "1" => Ok(Self::Full),
            _ => Err(invalid(format!("unknown pointwise grouping {s:?} (expected per_channel or full)"))),
        }
    }
}

/// Hyperparameters of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_channels: usize,
    pub n_timesteps: usize,
    pub n_classes: usize,
    pub delta_step: usize,
    /// Per-channel feature multiplier of the projection.
    pub hidden_depth: usize,
    pub kernel_size: usize,
    pub mlp_hidden: usize,
    pub dropout_conv: f64,
    pub dropout_mlp: f64,
    pub leaky_slope: f64,
    pub pointwise_groups: PointwiseGroups,
    pub variant: Variant,
}

impl ModelConfig {
    pub const DEFAULT_HIDDEN_DEPTH: usize = 8;
    pub const DEFAULT_KERNEL: usize = 7;
    pub const DEFAULT_MLP_HIDDEN: usize = 128;

    /// Default architecture for inputs of `n_channels x n_timesteps`.
    pub fn new(n_channels: usize, n_timesteps: usize, n_classes: usize) -> Self {
        Self {
            n_channels,
            n_timesteps,
            n_classes,
            delta_step: 1,
            hidden_depth: Self::DEFAULT_HIDDEN_DEPTH,
            kernel_size: Self::DEFAULT_KERNEL,
            mlp_hidden: Self::DEFAULT_MLP_HIDDEN,
            dropout_conv: 0.25,
            dropout_mlp: 0.5,
            leaky_slope: 0.01,
            pointwise_groups: PointwiseGroups::PerChannel,
            variant: Variant::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 || self.n_timesteps == 0 {
            return Err(invalid("model needs at least one channel and one timestep"));
        }
        if !(2..=3).contains(&self.n_classes) {
            return Err(invalid(format!("n_classes must be 2 or 3, got {}", self.n_classes)));
        }
        if self.delta_step == 0 || self.delta_step >= self.n_timesteps {
            return Err(invalid(format!(
                "delta step must satisfy 1 <= S < T, got S = {} with T = {}",
                self.delta_step, self.n_timesteps
            )));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(invalid(format!("kernel size must be odd, got {}", self.kernel_size)));
        }
        if self.hidden_depth == 0 {
            return Err(invalid("hidden depth must be >= 1"));
        }
        if self.mlp_hidden < 2 {
            return Err(invalid("mlp_hidden must be >= 2"));
        }
        for (name, p) in [("dropout_conv", self.dropout_conv), ("dropout_mlp", self.dropout_mlp)] {
            if !(0.0..1.0).contains(&p) {
                return Err(invalid(format!("{name} must be in [0, 1), got {p}")));
            }
        }
        if !self.leaky_slope.is_finite() {
            return Err(invalid("leaky slope must be finite"));
        }
        Ok(())
    }

    /// Channels entering the temporal convolution stage (2C with the delta
    /// front end, C without).
    pub fn stage_channels(&self) -> usize {
        if self.variant.uses_delta() {
            2 * self.n_channels
        } else {
            self.n_channels
        }
    }

    /// Time steps after the front end.
    pub fn stage_len(&self) -> usize {
        if self.variant.uses_delta() {
            self.n_timesteps - self.delta_step
        } else {
            self.n_timesteps
        }
    }

    /// Feature maps inside the residual blocks.
    pub fn feature_maps(&self) -> usize {
        self.stage_channels() * self.hidden_depth
    }

    pub fn pointwise_group_count(&self) -> usize {
        match self.pointwise_groups {
            PointwiseGroups::PerChannel => self.stage_channels(),
            PointwiseGroups::Full => 1,
        }
    }

    /// Width of the flattened vector fed to the MLP.
    pub fn embedding_dim(&self) -> usize {
        if self.variant.uses_gtc() {
            self.feature_maps()
        } else {
            self.stage_channels() * self.stage_len()
        }
    }

    pub fn conv_padding(&self) -> usize {
        (self.kernel_size - 1) / 2
    }

    /// Canonical serialized form used as the parameter-file fingerprint.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ModelConfig::new(17, 1600, 3).validate().is_ok());
        let mut c = ModelConfig::new(2, 16, 2);
        c.kernel_size = 4;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(2, 16, 4);
        assert!(c.validate().is_err());
        c.n_classes = 2;
        c.delta_step = 16;
        assert!(c.validate().is_err());
    }

    #[test]
    fn derived_dims() {
        let c = ModelConfig::new(17, 1600, 3);
        assert_eq!(c.stage_channels(), 34);
        assert_eq!(c.stage_len(), 1599);
        assert_eq!(c.feature_maps(), 272);
        assert_eq!(c.embedding_dim(), 272);
        let mut m = c.clone();
        m.variant = Variant::MlpOnly;
        assert_eq!(m.embedding_dim(), 17 * 1600);
        m.variant = Variant::DeltaMlp;
        assert_eq!(m.embedding_dim(), 34 * 1599);
        m.variant = Variant::GtcMlp;
        assert_eq!(m.embedding_dim(), 17 * 8);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
        assert!(Variant::parse("resnet").is_err());
    }
}
