//! Training driver over a synthetic dataset.

use super::dataset::Dataset;
use crate::error::{config, Result};
use crate::face_model::HeadAsset;
use crate::training::{LossReport, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const FINAL_CHECKPOINT: &str = "checkpoint.fwa";

/// Batch-sampling RNG for one iteration. Depends only on the seed and the
/// iteration so a resumed run draws the same batches.
pub fn batch_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_BA7C4);
    rng.set_stream(iteration as u64);
    rng
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Where metrics and checkpoints go; nothing is written without it.
    pub out_dir: Option<PathBuf>,
    /// Stop after this many iterations in total instead of the configured count.
    pub stop_at: Option<usize>,
}

fn checkpoint_path(dir: &Path, it: usize) -> PathBuf {
    dir.join(format!("checkpoint-{it:06}.fwa"))
}

/// Train until the configured iteration count, calling `on_step` after each
/// iteration. Metrics are appended to `metrics.jsonl` in the output directory.
pub fn train(
    trainer: &mut Trainer,
    dataset: &Dataset,
    asset: &HeadAsset,
    opts: &RunOptions,
    mut on_step: impl FnMut(&LossReport),
) -> Result<Vec<LossReport>> {
    if dataset.resolution() != trainer.config.model.resolution {
        return Err(config(format!(
            "dataset is {0}x{0}, model expects {1}x{1}",
            dataset.resolution(),
            trainer.config.model.resolution
        )));
    }
    if let Some(id) = trainer.model.codes {
        if trainer.model.gen_params.get(id).value.shape()[0] != asset.num_vertices() {
            return Err(config("latent codes do not match the asset"));
        }
    }
    let end = opts.stop_at.unwrap_or(trainer.config.train.iterations).min(trainer.config.train.iterations);
    let mut log: Option<BufWriter<File>> = match &opts.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            trainer.dump_dir = dir.clone();
            let f = OpenOptions::new()
                .create(true)
                .append(trainer.iteration > 0)
                .write(true)
                .truncate(trainer.iteration == 0)
                .open(dir.join(METRICS_FILE))?;
            Some(BufWriter::new(f))
        }
        None => None,
    };
    let kind = trainer.config.model.guidance;
    let batch_size = trainer.config.train.batch_size;
    let every = trainer.config.train.checkpoint_every;
    let mut reports = Vec::with_capacity(end.saturating_sub(trainer.iteration));
    while trainer.iteration < end {
        let mut rng = batch_rng(trainer.config.seed, trainer.iteration);
        let pairs = dataset.sample_pairs(batch_size, &mut rng);
        let batch = dataset.batch(asset, kind, &pairs)?;
        let report = trainer.train_step(&batch)?;
        if let Some(w) = log.as_mut() {
            report.write_jsonl(&mut *w)?;
            w.flush()?;
        }
        on_step(&report);
        reports.push(report);
        if let (Some(dir), true) = (&opts.out_dir, every > 0 && trainer.iteration % every == 0) {
            trainer.save(&checkpoint_path(dir, trainer.iteration))?;
        }
    }
    if let Some(dir) = &opts.out_dir {
        trainer.save(&dir.join(FINAL_CHECKPOINT))?;
    }
    Ok(reports)
}

/// Read a metrics log written by [`train`].
pub fn read_metrics(path: &Path) -> Result<Vec<LossReport>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
