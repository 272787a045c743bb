//! Linear warmup followed by cosine annealing.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub eta_max: f64,
    pub eta_min: f64,
    /// 0 means "resolve to the run's step budget".
    pub total_steps: u64,
    pub warmup_steps: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            eta_max: 2e-4,
            eta_min: 1e-6,
            total_steps: 0,
            warmup_steps: 500,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 <= self.eta_min && self.eta_min <= self.eta_max) {
            return Err(format!(
                "need 0 <= eta_min ({}) <= eta_max ({})",
                self.eta_min, self.eta_max
            ));
        }
        if self.total_steps > 0 && self.warmup_steps >= self.total_steps {
            return Err(format!(
                "warmup_steps ({}) must be < total_steps ({})",
                self.warmup_steps, self.total_steps
            ));
        }
        Ok(())
    }

    /// Fills in `total_steps` from the run budget when left at 0, shrinking
    /// warmup if needed to keep it valid.
    pub fn resolved(mut self, run_steps: u64) -> Self {
        if self.total_steps == 0 {
            self.total_steps = run_steps.max(1);
        }
        if self.warmup_steps >= self.total_steps {
            self.warmup_steps = self.total_steps / 10;
        }
        self
    }
}

/// Learning rate at `step` in `[0, total_steps]`: linear 0 -> eta_max over
/// the warmup, then `eta_min + (eta_max - eta_min) * (1 + cos(pi t)) / 2`.
pub fn lr_at(step: u64, s: &ScheduleConfig) -> f64 {
    let step = step.min(s.total_steps);
    if s.warmup_steps > 0 && step <= s.warmup_steps {
        return s.eta_max * step as f64 / s.warmup_steps as f64;
    }
    let span = (s.total_steps - s.warmup_steps) as f64;
    let t = if span > 0.0 {
        (step - s.warmup_steps) as f64 / span
    } else {
        1.0
    };
    s.eta_min + 0.5 * (s.eta_max - s.eta_min) * (1.0 + (std::f64::consts::PI * t).cos())
}
