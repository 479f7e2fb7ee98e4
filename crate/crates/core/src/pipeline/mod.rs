//! Image ingestion, square warping, ratio grouping and the synthetic
//! aspect-ratio dataset.

mod group;
mod manifest;
pub mod netpbm;
mod record;
mod synth;

pub use group::{group_by_ratio, BatchGroup, GroupBoundaries};
pub use manifest::{read_manifest, write_dataset, MANIFEST_FILE};
pub use record::{load_image, random_square_warp, square_warp, warp_batch, ImageRecord, WarpRange};
pub use synth::{synth_dataset, SynthSpec};
