use serde::{Deserialize, Serialize};

use super::SCORE_BINS;
use crate::error::{Error, Result};

/// One layer of the convolutional trunk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum BlockConfig {
    /// Odd `k x k` convolution with same padding. `afdc` swaps in the
    /// fractional dilated version with the same parameters.
    Conv {
        in_c: usize,
        out_c: usize,
        k: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        afdc: bool,
    },
    Relu,
    /// Non-overlapping `k x k` average pooling.
    Pool { k: usize },
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum HeadConfig {
    /// Global average pooling; the same as `spp` with `scales = [1]`.
    Global,
    Spp { scales: Vec<usize> },
}

impl HeadConfig {
    pub fn scales(&self) -> Vec<usize> {
        match self {
            HeadConfig::Global => vec![1],
            HeadConfig::Spp { scales } => scales.clone(),
        }
    }
}

/// Declarative network description, read from JSON.
///
/// ```json
/// {
///   "input_channels": 1,
///   "blocks": [
///     {"type": "conv", "in_c": 1, "out_c": 8, "k": 3, "afdc": true},
///     {"type": "relu"}
///   ],
///   "head": {"type": "spp", "scales": [1, 2]},
///   "feature_dim": 16
/// }
/// ```
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub blocks: Vec<BlockConfig>,
    pub head: HeadConfig,
    /// Width of the concatenated head features.
    pub feature_dim: usize,
    #[serde(default = "bins")]
    pub score_bins: usize,
}

fn bins() -> usize {
    SCORE_BINS
}

impl NetworkConfig {
    /// Four 3x3 conv blocks, stride 2 on every other block, 16 to 64
    /// channels, SPP over `{1, 2, 3}` into 96 features.
    pub fn desk_default(afdc: bool) -> Self {
        let conv = |in_c, out_c, stride| BlockConfig::Conv {
            in_c,
            out_c,
            k: 3,
            stride,
            afdc,
        };
        NetworkConfig {
            input_channels: 3,
            blocks: vec![
                conv(3, 16, 1),
                BlockConfig::Relu,
                conv(16, 32, 2),
                BlockConfig::Relu,
                conv(32, 48, 1),
                BlockConfig::Relu,
                conv(48, 64, 2),
                BlockConfig::Relu,
            ],
            head: HeadConfig::Spp { scales: vec![1, 2, 3] },
            feature_dim: 96,
            score_bins: SCORE_BINS,
        }
    }

    /// Small single-channel network used by the synthetic experiments.
    pub fn experiment(afdc: bool) -> Self {
        let conv = |in_c, out_c, stride| BlockConfig::Conv {
            in_c,
            out_c,
            k: 3,
            stride,
            afdc,
        };
        NetworkConfig {
            input_channels: 1,
            blocks: vec![
                conv(1, 8, 1),
                BlockConfig::Relu,
                conv(8, 16, 2),
                BlockConfig::Relu,
                conv(16, 16, 2),
                BlockConfig::Relu,
            ],
            head: HeadConfig::Spp { scales: vec![1, 2] },
            feature_dim: 32,
            score_bins: SCORE_BINS,
        }
    }

    /// Same config with every conv's `afdc` flag set to `on`.
    pub fn with_afdc(&self, on: bool) -> Self {
        let mut c = self.clone();
        for b in &mut c.blocks {
            if let BlockConfig::Conv { afdc, .. } = b {
                *afdc = on;
            }
        }
        c
    }

    pub fn has_afdc(&self) -> bool {
        self.blocks
            .iter()
            .any(|b| matches!(b, BlockConfig::Conv { afdc: true, .. }))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: NetworkConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Channel chain, kernel and head checks. Spatial fit is checked at
    /// forward time since warp sizes vary.
    pub fn validate(&self) -> Result<()> {
        let cfg = |index, message: String| Err(Error::Config { index, message });
        if self.blocks.is_empty() {
            return cfg(0, "network has no blocks".into());
        }
        if self.input_channels == 0 {
            return cfg(0, "input_channels must be positive".into());
        }
        let mut channels = self.input_channels;
        for (i, b) in self.blocks.iter().enumerate() {
            match *b {
                BlockConfig::Conv {
                    in_c,
                    out_c,
                    k,
                    stride,
                    ..
                } => {
                    if in_c != channels {
                        return cfg(i, format!("conv expects {in_c} input channels, previous layer gives {channels}"));
                    }
                    if out_c == 0 || stride == 0 {
                        return cfg(i, "conv needs positive out_c and stride".into());
                    }
                    if k % 2 == 0 {
                        return cfg(i, format!("conv kernel size {k} must be odd"));
                    }
                    channels = out_c;
                }
                BlockConfig::Pool { k: 0 } => return cfg(i, "pool size must be positive".into()),
                _ => {}
            }
        }
        let head = self.blocks.len();
        let scales = self.head.scales();
        if scales.is_empty() || scales.contains(&0) {
            return cfg(head, "head scales must be nonempty and positive".into());
        }
        if self.feature_dim == 0 || !self.feature_dim.is_multiple_of(scales.len()) {
            return cfg(
                head,
                format!("feature_dim {} not divisible by {} scales", self.feature_dim, scales.len()),
            );
        }
        if self.score_bins != SCORE_BINS {
            return cfg(head, format!("score_bins must be {SCORE_BINS}"));
        }
        Ok(())
    }

    /// Channels leaving the trunk.
    pub fn trunk_channels(&self) -> usize {
        self.blocks
            .iter()
            .rev()
            .find_map(|b| match b {
                BlockConfig::Conv { out_c, .. } => Some(*out_c),
                _ => None,
            })
            .unwrap_or(self.input_channels)
    }
}
