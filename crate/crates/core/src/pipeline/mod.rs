//! Synthetic data, metrics, reenactment, editing and the training driver.

pub mod animate;
pub mod dataset;
pub mod evaluate;
pub mod metrics;
pub mod render;
pub mod run;

pub use animate::{edit, guidance_params, reenact, reenact_batch, ReenactItem, ReenactMode, Reenactment, Sweep, SweepTarget};
pub use dataset::{generate_dataset, Dataset, FramePair, Manifest};
pub use evaluate::{evaluate, EvalConfig, Method, MetricReport, Protocol};
pub use render::{render_frame, Appearance, Background, Image};
pub use run::{train, RunOptions};
