//! Deterministic training loop: seeded batch assembly and augmentation,
//! data-parallel forward/backward over the batch with fixed-order gradient
//! reduction, cosine-annealed updates, TSV loss logging, and periodic
//! checkpoints that resume bit-exactly.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rganet_network::{forward, init_params, load_checkpoint, save_checkpoint, ModelConfig, NetworkError};
use rganet_tensor::{Gradients, ParamStore, Scalar, Tape, TensorError};

use crate::augment::{augment, mixup, AugmentConfig, PairedSample};
use crate::loss::{loss_total_on_tape, LossBreakdown, DEFAULT_LAMBDA};
use crate::optim::{optimizer_step, OptimHyper, OptimizerState};
use crate::schedule::{lr_at, ScheduleConfig};

/// Everything a run needs, as read from a JSON config file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub augment: AugmentConfig,
    pub optim: OptimHyper,
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub steps: u64,
    pub batch: usize,
    pub seed: u64,
    /// Save a checkpoint every N steps (0 = only at the end).
    pub checkpoint_every: u64,
    pub out_dir: Option<PathBuf>,
    pub augment_enabled: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 1000,
            batch: 4,
            seed: 0,
            checkpoint_every: 0,
            out_dir: None,
            augment_enabled: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LogEntry {
    pub step: u64,
    pub lr: f64,
    pub l2: f64,
    pub ssim_term: f64,
    pub total: f64,
}

impl LogEntry {
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.step, self.lr, self.l2, self.ssim_term, self.total
        )
    }
}

pub struct TrainReport {
    pub log: Vec<LogEntry>,
    pub final_loss: Option<LossBreakdown>,
    pub store: ParamStore<f32>,
    pub state: OptimizerState<f32>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: u64 },

    #[error("train usage error: {detail}")]
    Usage { detail: String },

    #[error("train io error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Network(#[from] NetworkError),

    #[error(transparent)]
    Tensor(#[from] TensorError),
}

fn mix_seed(seed: u64, step: u64) -> u64 {
    // splitmix64 of (seed ^ golden-ratio stride) per step
    let mut z = seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Forward + loss + backward for one sample; returns per-parameter
/// gradients and the loss values.
fn sample_pass(
    store: &ParamStore<f32>,
    model: &ModelConfig,
    sample: &PairedSample,
) -> Result<(Gradients<f32>, LossBreakdown), TrainError> {
    let mut tape = Tape::new();
    let x = tape.constant(sample.input.clone());
    let target = tape.constant(sample.target.clone());
    let pred = forward(&mut tape, store, model, x)?;
    let (total, l2, ssim_term) = loss_total_on_tape(&mut tape, pred, target, DEFAULT_LAMBDA)?;
    let result = tape.backward(total)?;
    let grads = tape.collect_param_grads(&result, store.len());
    let breakdown = LossBreakdown {
        l2: tape.value(l2).scalar_value()?.as64(),
        ssim_term: tape.value(ssim_term).scalar_value()?.as64(),
        total: tape.value(total).scalar_value()?.as64(),
        lambda: DEFAULT_LAMBDA,
    };
    Ok((grads, breakdown))
}

/// Runs (or resumes) a training loop. Deterministic given the seed: batch
/// indices and augmentation draws derive from (seed, step) alone, so a
/// resumed run reproduces the uninterrupted trajectory bit-exactly.
pub fn train(
    run: &RunConfig,
    dataset: &[PairedSample],
    opts: &TrainOptions,
    resume: Option<&Path>,
) -> Result<TrainReport, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::Usage {
            detail: "dataset is empty".into(),
        });
    }
    if opts.batch == 0 {
        return Err(TrainError::Usage {
            detail: "batch must be >= 1".into(),
        });
    }
    run.model.validate()?;
    let schedule = run.schedule.resolved(opts.steps);
    schedule
        .validate()
        .map_err(|detail| TrainError::Usage { detail })?;

    let (mut store, mut state) = match resume {
        Some(path) => {
            let decoded = load_checkpoint(path)?;
            if decoded.config != run.model {
                return Err(TrainError::Usage {
                    detail: "checkpoint config does not match the run config".into(),
                });
            }
            let state = OptimizerState::from_extras(&decoded.params, &decoded.extras);
            (decoded.params, state)
        }
        None => {
            let store = init_params::<f32>(&run.model, opts.seed)?;
            let state = OptimizerState::new(&store);
            (store, state)
        }
    };
    let start = state.step;
    if start >= opts.steps {
        return Err(TrainError::Usage {
            detail: format!("checkpoint is already at step {start} >= {}", opts.steps),
        });
    }

    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut log = Vec::with_capacity((opts.steps - start) as usize);
    let mut final_loss = None;
    for step in start + 1..=opts.steps {
        // Per-step stream: identical regardless of where the run started.
        let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(opts.seed, step));
        let mut batch = Vec::with_capacity(opts.batch);
        for _ in 0..opts.batch {
            let idx = rng.gen_range(0..dataset.len());
            let mut sample = if opts.augment_enabled {
                augment(&dataset[idx], &run.augment, &mut rng)?
            } else {
                dataset[idx].clone()
            };
            if opts.augment_enabled && run.augment.mixup_enabled {
                let partner = rng.gen_range(0..dataset.len());
                let other = augment(&dataset[partner], &run.augment, &mut rng)?;
                sample = mixup(&sample, &other, run.augment.mixup_beta_param, &mut rng)?;
            }
            batch.push(sample);
        }

        let passes: Result<Vec<_>, TrainError> = batch
            .par_iter()
            .map(|s| sample_pass(&store, &run.model, s))
            .collect();
        let passes = passes?;

        // Fixed-order reduction over the batch.
        let mut grads = Gradients::zeros(store.len());
        let mut mean = LossBreakdown {
            l2: 0.0,
            ssim_term: 0.0,
            total: 0.0,
            lambda: DEFAULT_LAMBDA,
        };
        for (g, b) in &passes {
            grads.add_from(g);
            mean.l2 += b.l2;
            mean.ssim_term += b.ssim_term;
            mean.total += b.total;
        }
        let inv = 1.0 / opts.batch as f64;
        grads.scale(inv as f32);
        mean.l2 *= inv;
        mean.ssim_term *= inv;
        mean.total *= inv;

        if !mean.total.is_finite() {
            return Err(TrainError::Diverged { step });
        }

        let lr = lr_at(step, &schedule);
        optimizer_step(&mut store, &grads, &mut state, &run.optim, lr);
        debug_assert_eq!(state.step, step);

        log.push(LogEntry {
            step,
            lr,
            l2: mean.l2,
            ssim_term: mean.ssim_term,
            total: mean.total,
        });
        final_loss = Some(mean);

        if opts.checkpoint_every > 0 && step % opts.checkpoint_every == 0 && step != opts.steps {
            if let Some(dir) = &opts.out_dir {
                let path = dir.join(format!("checkpoint_step{step}.rgan"));
                save_checkpoint(&path, &run.model, &store, &state.to_extras(&store))?;
            }
        }
    }

    let mut checkpoint = None;
    if let Some(dir) = &opts.out_dir {
        let path = dir.join("checkpoint.rgan");
        save_checkpoint(&path, &run.model, &store, &state.to_extras(&store))?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("loss_log.tsv"))?);
        for entry in &log {
            writeln!(f, "{}", entry.tsv_line())?;
        }
        f.flush()?;
        checkpoint = Some(path);
    }

    Ok(TrainReport {
        log,
        final_loss,
        store,
        state,
        checkpoint,
    })
}
