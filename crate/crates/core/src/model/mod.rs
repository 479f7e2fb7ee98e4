//! Small score-distribution networks built from JSON configs.

mod checkpoint;
mod config;
mod network;
mod score;
mod spp;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, ParamEntry, CHECKPOINT_FILE, CHECKPOINT_VERSION};
pub use config::{BlockConfig, HeadConfig, NetworkConfig};
pub use network::{logits_to_distributions, ForwardPass, Layer, Model};
pub use score::{binarize, mean_score, Quality, ScoreDistribution, HIGH_THRESHOLD, SCORE_BINS};
pub use spp::{spp_head, spp_head_backward, SppPass};
