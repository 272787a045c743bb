//! Dataset ingestion, synthetic-smoke generation and the gradient
//! verification suite backing the `rganet` command-line tool.

pub mod dataset;
pub mod gradsuite;
pub mod synth;

pub use dataset::{list_pngs, load_dataset, load_png, pair_dirs, save_png, DataError};
pub use gradsuite::{run_gradient_suite, GradCheckOutcome};
pub use synth::{apply_smoke, generate_clean_image, synth_smoke, value_noise, SmokeParams};

use std::path::Path;

use rganet_training::RunConfig;

/// Reads a JSON run config; `None` gives the built-in toy defaults.
pub fn load_run_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", p.display()))?;
            let cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| anyhow::anyhow!("cannot parse config {}: {e}", p.display()))?;
            cfg.model
                .validate()
                .map_err(|e| anyhow::anyhow!("invalid config {}: {e}", p.display()))?;
            Ok(cfg)
        }
    }
}
