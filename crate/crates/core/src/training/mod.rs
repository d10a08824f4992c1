//! Losses, run configuration and the optimisation loop.

pub mod config;
pub mod losses;
mod model;
mod trainer;

pub use config::{Config, DataConfig, ExtractorKind, LossConfig, ScheduleConfig};
pub use model::{generate, BatchGeometry, Model, CODES_PARAM};
pub use trainer::{Batch, LossReport, Trainer, CHECKPOINT_KIND};
