//! Attention mechanisms for the desmoking network: shifted/local window
//! attention with relative position bias, the dual-stream hybrid attention
//! blend with its spectral path, and axis-decomposed (block + grid)
//! attention with a gated depthwise FFN.

pub mod ada;
pub mod attention;
pub mod dha;
pub mod geometry;

pub use ada::{ada_forward, block_attention, gated_ffn, grid_attention, AdaVars, FfnVars, LnVars};
pub use attention::{bias_table_len, window_attention, AttentionVars};
pub use dha::{dha_forward, local_branch, shifted_branch, spectral_branch, DhaVars};
