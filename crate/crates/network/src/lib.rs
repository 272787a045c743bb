//! Assembly of the full desmoking network: configuration, parameter
//! management, the encoder/bottleneck/decoder forward pass with reciprocal
//! cross-gating skips, ablation variants, and bit-exact checkpointing.

pub mod checkpoint;
pub mod config;
mod error;
pub mod gating;
pub mod model;
pub mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, Decoded, ExtraTensor};
pub use config::{make_ablation_variant, AblationCase, ModelConfig};
pub use error::NetworkError;
pub use gating::{cross_gate, cross_gate_fuse, AlignVars, CrossGateVars};
pub use model::{downsample, embed, forward, infer, upsample};
pub use params::{init_params, param_count, physical_dims, visit_params};
