//! Optimization, learning-rate schedules and the transfer-learning loop.

pub mod fit;
pub mod optim;
pub mod schedule;

pub use fit::{evaluate, fine_tune, fit, EpochRecord, EvalResult, FitConfig, FitReport};
pub use optim::{sgd_update, Sgd, DEFAULT_MOMENTUM, DEFAULT_WEIGHT_DECAY};
pub use schedule::{schedule_lr, Policy, ScheduleSpec};
