use serde::{Deserialize, Serialize};

use crate::NetworkError;

/// Full architectural hyperparameter record.
///
/// Serialized as JSON with exactly these field names, both in config files
/// and inside checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Encoder/decoder levels; each encoder level ends with a downsample.
    pub levels: usize,
    /// Channels at level 0; level l runs at `base_channels * 2^l`.
    pub base_channels: usize,
    pub blocks_per_level: Vec<usize>,
    pub bottleneck_blocks: usize,
    pub decoder_blocks_per_level: Vec<usize>,
    /// Window rows/cols for the dual-stream attention blocks.
    pub window: (usize, usize),
    /// Tile size for block attention.
    pub block: (usize, usize),
    /// Grid counts for dilated grid attention.
    pub grid: (usize, usize),
    pub ffn_ratio: usize,
    pub head_dim: usize,
    pub use_dha: bool,
    pub use_ada: bool,
    pub use_crossgating: bool,
    pub global_residual: bool,
}

impl Default for ModelConfig {
    /// The desk-scale configuration used throughout the test suites.
    fn default() -> Self {
        ModelConfig {
            levels: 3,
            base_channels: 16,
            blocks_per_level: vec![1, 1, 1],
            bottleneck_blocks: 1,
            decoder_blocks_per_level: vec![1, 1, 1],
            window: (4, 4),
            block: (4, 4),
            grid: (4, 4),
            ffn_ratio: 2,
            head_dim: 16,
            use_dha: true,
            use_ada: true,
            use_crossgating: true,
            global_residual: true,
        }
    }
}

impl ModelConfig {
    pub fn toy() -> Self {
        Self::default()
    }

    /// Larger default for real-data runs (not exercised by the test suites).
    pub fn full_scale() -> Self {
        ModelConfig {
            levels: 4,
            base_channels: 32,
            blocks_per_level: vec![2, 2, 2, 2],
            bottleneck_blocks: 2,
            decoder_blocks_per_level: vec![2, 2, 2, 2],
            window: (8, 8),
            block: (8, 8),
            grid: (8, 8),
            ..Self::default()
        }
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.base_channels << self.levels
    }

    pub fn heads(&self, channels: usize) -> usize {
        channels / self.head_dim
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let fail = |d: String| Err(NetworkError::Config { detail: d });
        if self.levels < 1 {
            return fail("levels must be >= 1".into());
        }
        if self.base_channels == 0 || self.head_dim == 0 {
            return fail("base_channels and head_dim must be >= 1".into());
        }
        if self.base_channels % self.head_dim != 0 {
            return fail(format!(
                "base_channels {} must be divisible by head_dim {}",
                self.base_channels, self.head_dim
            ));
        }
        if self.blocks_per_level.len() != self.levels
            || self.decoder_blocks_per_level.len() != self.levels
        {
            return fail(format!(
                "blocks_per_level/decoder_blocks_per_level must list {} levels",
                self.levels
            ));
        }
        for (m, n) in [self.window, self.block, self.grid] {
            if m == 0 || n == 0 {
                return fail("window/block/grid dims must be >= 1".into());
            }
        }
        if self.ffn_ratio == 0 {
            return fail("ffn_ratio must be >= 1".into());
        }
        Ok(())
    }
}

/// Table-II style single-component ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationCase {
    /// Encoder blocks become plain shifted-window attention (no spectral
    /// path, no dual stream).
    NoDha,
    /// Bottleneck/decoder blocks become plain unshifted window attention.
    NoAda,
    /// Skip fusion becomes channel concatenation + 1x1 convolution.
    NoCrossgating,
}

impl std::str::FromStr for AblationCase {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_dha" => Ok(AblationCase::NoDha),
            "no_ada" => Ok(AblationCase::NoAda),
            "no_crossgating" => Ok(AblationCase::NoCrossgating),
            other => Err(NetworkError::Usage {
                detail: format!(
                    "unknown ablation case {other:?} (expected no_dha, no_ada or no_crossgating)"
                ),
            }),
        }
    }
}

impl std::fmt::Display for AblationCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AblationCase::NoDha => "no_dha",
            AblationCase::NoAda => "no_ada",
            AblationCase::NoCrossgating => "no_crossgating",
        })
    }
}

/// Returns a copy of `config` with exactly one component flag toggled off.
pub fn make_ablation_variant(config: &ModelConfig, case: AblationCase) -> ModelConfig {
    let mut out = config.clone();
    match case {
        AblationCase::NoDha => out.use_dha = false,
        AblationCase::NoAda => out.use_ada = false,
        AblationCase::NoCrossgating => out.use_crossgating = false,
    }
    out
}
