//! Static parameter and Mult-Adds accounting.
//!
//! One multiply-accumulate counts as one Mult-Add. A convolution costs
//! `out_h * out_w * out_c * in_c * k_h * k_w`. Under K dilation branches a
//! spatially extended AFDC convolution costs K times that, plus
//! `out_elems * (K + K - 1)` for the per-sample blend. Parameters never
//! depend on K.

mod inventory;
mod report;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{BlockConfig, NetworkConfig};
use crate::tensor::conv_output_len;

pub use inventory::{resnet50, vgg16};
pub use report::{cost_table, cost_table_csv, cost_table_text, grouping_report, CostRow, GroupRow, GroupingReport, RatioHistogram};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CostOp {
    Conv {
        in_c: usize,
        out_c: usize,
        k_h: usize,
        k_w: usize,
        stride: usize,
        padding: usize,
        /// Whether this layer becomes a K-branch AFDC layer.
        afdc: bool,
    },
    /// Max or average pooling; shapes only.
    Pool { k: usize, stride: usize, padding: usize },
    /// Adaptive pooling to a `g x g` grid.
    Adaptive { grid: usize },
    Dense { in_f: usize, out_f: usize },
    /// Flat concatenation of earlier outputs; shape only.
    Concat { out_f: usize },
}

/// One layer of a cost inventory. `from` names an earlier layer whose
/// output this one reads; `None` reads the previous layer (or the input).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostLayer {
    pub name: String,
    pub op: CostOp,
    #[serde(default)]
    pub from: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostNet {
    pub name: String,
    pub input_channels: usize,
    pub layers: Vec<CostLayer>,
}

/// Per-layer result at a given resolution and branch count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub params: u64,
    pub mult_adds: u64,
    /// K for spatially extended AFDC convolutions, otherwise 1.
    pub dilation_multiplier: u64,
    pub out_shape: (usize, usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub layers: Vec<LayerCost>,
    pub params: u64,
    pub mult_adds: u64,
}

impl CostBreakdown {
    /// Mult-Adds of AFDC layers, blend included.
    pub fn afdc_mult_adds(&self) -> u64 {
        self.layers
            .iter()
            .filter(|l| l.dilation_multiplier > 1)
            .map(|l| l.mult_adds)
            .sum()
    }
}

impl CostOp {
    pub fn params(&self) -> u64 {
        match *self {
            CostOp::Conv {
                in_c,
                out_c,
                k_h,
                k_w,
                ..
            } => (out_c * in_c * k_h * k_w + out_c) as u64,
            CostOp::Dense { in_f, out_f } => (out_f * in_f + out_f) as u64,
            CostOp::Pool { .. } | CostOp::Adaptive { .. } | CostOp::Concat { .. } => 0,
        }
    }

    fn spatial_afdc(&self) -> bool {
        matches!(*self, CostOp::Conv { afdc: true, k_h, k_w, .. } if k_h > 1 || k_w > 1)
    }
}

impl CostNet {
    pub fn count_params(&self) -> u64 {
        self.layers.iter().map(|l| l.op.params()).sum()
    }

    /// Same inventory with every AFDC flag cleared.
    pub fn vanilla(&self) -> CostNet {
        let mut n = self.clone();
        for l in &mut n.layers {
            if let CostOp::Conv { afdc, .. } = &mut l.op {
                *afdc = false;
            }
        }
        n
    }

    /// Shape propagation and per-layer costs for an `input_hw` square input
    /// and `k` dilation branches.
    pub fn count_mult_adds(&self, input_hw: (usize, usize), k: usize) -> Result<CostBreakdown> {
        if k == 0 {
            return Err(invalid("number of dilations must be at least 1"));
        }
        let mut shapes: HashMap<&str, (usize, usize, usize)> = HashMap::new();
        let mut prev = (self.input_channels, input_hw.0, input_hw.1);
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (c, h, w) = match &layer.from {
                None => prev,
                Some(src) => *shapes
                    .get(src.as_str())
                    .ok_or_else(|| invalid(format!("{}: unknown source layer {src}", layer.name)))?,
            };
            let fail = |what: &str| invalid(format!("{}: {what} at input {c}x{h}x{w}", layer.name));
            let (out, macs) = match layer.op {
                CostOp::Conv {
                    in_c,
                    out_c,
                    k_h,
                    k_w,
                    stride,
                    padding,
                    ..
                } => {
                    if in_c != c {
                        return Err(fail(&format!("expects {in_c} channels")));
                    }
                    let oh = conv_output_len(h, k_h, 1, stride, padding).ok_or_else(|| fail("resolution too small"))?;
                    let ow = conv_output_len(w, k_w, 1, stride, padding).ok_or_else(|| fail("resolution too small"))?;
                    ((out_c, oh, ow), (oh * ow * out_c * in_c * k_h * k_w) as u64)
                }
                CostOp::Pool { k, stride, padding } => {
                    let oh = conv_output_len(h, k, 1, stride, padding).ok_or_else(|| fail("resolution too small"))?;
                    let ow = conv_output_len(w, k, 1, stride, padding).ok_or_else(|| fail("resolution too small"))?;
                    ((c, oh, ow), 0)
                }
                CostOp::Adaptive { grid } => {
                    if grid == 0 || grid > h.min(w) {
                        return Err(fail("adaptive grid does not fit"));
                    }
                    ((c, grid, grid), 0)
                }
                CostOp::Concat { out_f } => ((out_f, 1, 1), 0),
                CostOp::Dense { in_f, out_f } => {
                    if in_f != c * h * w {
                        return Err(fail(&format!("dense expects {in_f} features")));
                    }
                    ((out_f, 1, 1), (in_f * out_f) as u64)
                }
            };
            let (mult, mult_adds) = if layer.op.spatial_afdc() && k > 1 {
                let elems = (out.0 * out.1 * out.2) as u64;
                let k = k as u64;
                (k, macs * k + elems * (2 * k - 1))
            } else {
                (1, macs)
            };
            layers.push(LayerCost {
                name: layer.name.clone(),
                params: layer.op.params(),
                mult_adds,
                dilation_multiplier: mult,
                out_shape: out,
            });
            shapes.insert(&layer.name, out);
            prev = out;
        }
        Ok(CostBreakdown {
            params: layers.iter().map(|l| l.params).sum(),
            mult_adds: layers.iter().map(|l| l.mult_adds).sum(),
            layers,
        })
    }

    /// Inventory of a trainable network config, head included.
    pub fn from_network(config: &NetworkConfig) -> Result<CostNet> {
        config.validate()?;
        let mut layers = Vec::new();
        for (i, b) in config.blocks.iter().enumerate() {
            let op = match *b {
                BlockConfig::Conv {
                    in_c,
                    out_c,
                    k,
                    stride,
                    afdc,
                } => CostOp::Conv {
                    in_c,
                    out_c,
                    k_h: k,
                    k_w: k,
                    stride,
                    padding: k / 2,
                    afdc,
                },
                BlockConfig::Pool { k } => CostOp::Pool { k, stride: k, padding: 0 },
                BlockConfig::Relu => continue,
            };
            layers.push(CostLayer {
                name: format!("block{i}"),
                op,
                from: None,
            });
        }
        let trunk = layers.last().map(|l| l.name.clone());
        let c = config.trunk_channels();
        let scales = config.head.scales();
        let seg = config.feature_dim / scales.len();
        for (s, &g) in scales.iter().enumerate() {
            layers.push(CostLayer {
                name: format!("spp{s}.pool"),
                op: CostOp::Adaptive { grid: g },
                from: trunk.clone(),
            });
            layers.push(CostLayer {
                name: format!("spp{s}"),
                op: CostOp::Dense {
                    in_f: c * g * g,
                    out_f: seg,
                },
                from: None,
            });
        }
        layers.push(CostLayer {
            name: "concat".into(),
            op: CostOp::Concat {
                out_f: seg * scales.len(),
            },
            from: None,
        });
        layers.push(CostLayer {
            name: "output".into(),
            op: CostOp::Dense {
                in_f: seg * scales.len(),
                out_f: config.score_bins,
            },
            from: None,
        });
        Ok(CostNet {
            name: "custom".into(),
            input_channels: config.input_channels,
            layers,
        })
    }
}
