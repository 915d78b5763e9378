use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Constant,
    OneCycle,
}

/// Learning-rate schedule over `total_steps` optimizer steps.
///
/// One-cycle rises by half-cosine from `max_lr / div_start` to `max_lr` over
/// the first `warmup_fraction` of the steps, then falls by half-cosine to
/// `max_lr / div_end` at the last step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub policy: Policy,
    pub max_lr: f64,
    pub total_steps: usize,
    pub warmup_fraction: f64,
    pub div_start: f64,
    pub div_end: f64,
}

impl ScheduleSpec {
    pub fn constant(lr: f64, total_steps: usize) -> Self {
        ScheduleSpec {
            policy: Policy::Constant,
            max_lr: lr,
            total_steps,
            warmup_fraction: 0.0,
            div_start: 1.0,
            div_end: 1.0,
        }
    }

    pub fn one_cycle(max_lr: f64, total_steps: usize) -> Self {
        ScheduleSpec {
            policy: Policy::OneCycle,
            max_lr,
            total_steps,
            warmup_fraction: 0.25,
            div_start: 25.0,
            div_end: 1e4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return Err(Error::contract(format!("max learning rate must be positive, got {}", self.max_lr)));
        }
        if self.policy == Policy::OneCycle {
            if !(0.0..=1.0).contains(&self.warmup_fraction) {
                return Err(Error::contract("warmup fraction must lie in [0, 1]"));
            }
            if !(self.div_start >= 1.0 && self.div_end >= 1.0) {
                return Err(Error::contract("one-cycle divisors must be at least 1"));
            }
        }
        Ok(())
    }

    /// The step at which the peak is reached.
    pub fn peak_step(&self) -> f64 {
        self.warmup_fraction * self.total_steps as f64
    }
}

fn cosine(from: f64, to: f64, frac: f64) -> f64 {
    to + (from - to) * (1.0 + (PI * frac).cos()) / 2.0
}

/// Learning rate at `step`, for `0 <= step <= total_steps`.
pub fn schedule_lr(spec: &ScheduleSpec, step: usize) -> Result<f64> {
    spec.validate()?;
    if step > spec.total_steps {
        return Err(Error::contract(format!(
            "schedule step {step} past the last step {}",
            spec.total_steps
        )));
    }
    Ok(match spec.policy {
        Policy::Constant => spec.max_lr,
        Policy::OneCycle => {
            let (s, w, total) = (step as f64, spec.peak_step(), spec.total_steps as f64);
            if s < w {
                cosine(spec.max_lr / spec.div_start, spec.max_lr, s / w)
            } else if total > w {
                cosine(spec.max_lr, spec.max_lr / spec.div_end, (s - w) / (total - w))
            } else {
                spec.max_lr
            }
        }
    })
}
