//! Adaptive fractional dilated convolution.
//!
//! An image warped to a fixed square loses its aspect ratio `r`. The layers
//! here restore the receptive field by dilating the kernel along the
//! stretched axis by a fractional amount, realized as a blend of the two
//! nearest integer dilations of one shared kernel.

mod conv;
mod ratio;
mod rates;
mod weights;

pub use conv::{afdc_batch_backward, afdc_batch_forward, afdc_direct, afdc_output_dims, branch_geometry};
pub use ratio::{compute_ratio, AspectRatio, Orientation};
pub use rates::{DilationRate, DilationRateSet};
pub use weights::{
    effective_ratio, interpolation_weights, rate_weight, test_mode_weights, InterpolationWeights, WeightMode,
};
