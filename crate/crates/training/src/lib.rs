//! Training stack for the desmoking network: the L2+SSIM objective,
//! full-reference quality metrics, decoupled-weight-decay optimization with
//! cosine annealing, paired augmentation, and a deterministic, resumable
//! training loop.

pub mod augment;
pub mod color;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod schedule;
pub mod ssim;
pub mod trainer;

pub use augment::{augment, mixup, mixup_with_lambda, AugmentConfig, PairedSample};
pub use color::{delta_e_2000, srgb_to_lab};
pub use loss::{loss_total, loss_total_on_tape, LossBreakdown, DEFAULT_LAMBDA};
pub use metrics::{ciede2000_mean, mae_255, metrics, psnr, report, MetricValues, MetricsReport};
pub use optim::{optimizer_step, OptimHyper, OptimizerState};
pub use schedule::{lr_at, ScheduleConfig};
pub use ssim::{ms_ssim, ssim_mean, ssim_mean_on_tape};
pub use trainer::{train, LogEntry, RunConfig, TrainError, TrainOptions, TrainReport};
