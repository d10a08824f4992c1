//! Reconstruction and motion-transfer metrics over held-out pairs.

use super::animate::{reenact_batch, ReenactItem, ReenactMode};
use super::dataset::Dataset;
use super::metrics::{aed, akd, apd, l1_255, masked_l1_255, ssim};
use super::render::Image;
use crate::error::{input, Result};
use crate::face_model::{landmarks2d, lbs, FaceParams, HeadAsset};
use crate::guidance::mesh_fragments;
use crate::training::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What produces the output image for a (source, driving) pair.
#[derive(Clone, Copy)]
pub enum Method<'a> {
    Model(&'a Model<f32>),
    /// Return the source image unchanged.
    CopySource,
    /// Return the ground-truth target (same-identity pairs only).
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Same,
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Frame pairs drawn per held-out identity. Same-identity pairs are
    /// evaluated in both directions.
    pub pairs_per_identity: usize,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pairs_per_identity: 5,
            seed: 99,
            batch_size: 8,
        }
    }
}

/// Means over evaluated pairs. Image metrics exist only for the same-identity
/// protocol, where a ground-truth target is available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub protocol: Protocol,
    pub pairs: usize,
    /// Mean absolute error on the 0..255 scale.
    pub l1: Option<f64>,
    pub ssim: Option<f64>,
    /// Pixels, between landmarks of the realized and ground-truth parameters.
    pub akd: Option<f64>,
    /// Degrees, mean over the three head angles.
    pub apd: f64,
    pub aed: f64,
    /// L1 inside the ground-truth face region, 0..255 scale.
    pub masked_l1: Option<f64>,
}

impl MetricReport {
    pub fn is_finite(&self) -> bool {
        [self.l1, self.ssim, self.akd, self.masked_l1].iter().flatten().all(|v| v.is_finite())
            && self.apd.is_finite()
            && self.aed.is_finite()
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "protocol = {:?}\npairs = {}\n",
            format!("{:?}", self.protocol).to_lowercase(),
            self.pairs
        );
        let mut line = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                s.push_str(&format!("{k} = {v:.6}\n"));
            }
        };
        line("l1", self.l1);
        line("ssim", self.ssim);
        line("akd", self.akd);
        line("apd", Some(self.apd));
        line("aed", Some(self.aed));
        line("masked_l1", self.masked_l1);
        s
    }
}

/// (identity, frame) of source and driving.
pub type EvalPair = ((usize, usize), (usize, usize));

/// Deterministic evaluation pairs over held-out identities.
pub fn eval_pairs(dataset: &Dataset, protocol: Protocol, cfg: &EvalConfig) -> Result<Vec<EvalPair>> {
    let held = dataset.held_out_identities();
    let all: Vec<usize> = dataset.manifest.identities.iter().map(|r| r.id).collect();
    if held.is_empty() || cfg.pairs_per_identity == 0 {
        return Err(input("no held-out identities or pairs to evaluate"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pairs = Vec::new();
    for &id in &held {
        let n = dataset.manifest.identities[id].frames.len();
        for _ in 0..cfg.pairs_per_identity {
            match protocol {
                Protocol::Same => {
                    if n < 2 {
                        return Err(input("same-identity evaluation needs two frames per identity"));
                    }
                    let s = rng.gen_range(0..n);
                    let mut t = rng.gen_range(0..n - 1);
                    if t >= s {
                        t += 1;
                    }
                    // Forward and backward reconstruction of the same pair.
                    pairs.push(((id, s), (id, t)));
                    pairs.push(((id, t), (id, s)));
                }
                Protocol::Cross => {
                    let pool: Vec<usize> = if held.len() > 1 { held.clone() } else { all.clone() };
                    let others: Vec<usize> = pool.into_iter().filter(|&o| o != id).collect();
                    if others.is_empty() {
                        return Err(input("cross-identity evaluation needs two identities"));
                    }
                    let o = others[rng.gen_range(0..others.len())];
                    let m = dataset.manifest.identities[o].frames.len();
                    pairs.push(((id, rng.gen_range(0..n)), (o, rng.gen_range(0..m))));
                }
            }
        }
    }
    Ok(pairs)
}

struct Accum {
    sums: [f64; 6],
    n: usize,
}

/// Evaluate `method` on held-out pairs.
///
/// Geometry metrics compare the parameters an output realizes with the
/// reference: for the model these are the guidance parameters it was fed,
/// for the copy baseline the source parameters.
pub fn evaluate(method: Method<'_>, asset: &HeadAsset, dataset: &Dataset, protocol: Protocol, cfg: &EvalConfig) -> Result<MetricReport> {
    if protocol == Protocol::Cross && matches!(method, Method::GroundTruth) {
        return Err(input("there is no ground truth for cross-identity pairs"));
    }
    let pairs = eval_pairs(dataset, protocol, cfg)?;
    let r = dataset.resolution();
    let mode = match protocol {
        Protocol::Same => ReenactMode::Same,
        Protocol::Cross => ReenactMode::Cross,
    };
    let mut acc = Accum { sums: [0.0; 6], n: 0 };
    for chunk in pairs.chunks(cfg.batch_size.max(1)) {
        let outputs: Vec<(Image, FaceParams)> = match method {
            Method::Model(model) => {
                let items: Vec<ReenactItem<'_>> = chunk
                    .iter()
                    .map(|&(s, d)| ReenactItem {
                        source: dataset.frame(s.0, s.1).1,
                        params_s: &dataset.frame(s.0, s.1).0.params,
                        params_d: &dataset.frame(d.0, d.1).0.params,
                    })
                    .collect();
                reenact_batch(model, asset, &items, mode)?.into_iter().map(|o| (o.image, o.target_params)).collect()
            }
            Method::CopySource => chunk
                .iter()
                .map(|&(s, _)| (dataset.frame(s.0, s.1).1.clone(), dataset.frame(s.0, s.1).0.params.clone()))
                .collect(),
            Method::GroundTruth => chunk
                .iter()
                .map(|&(_, d)| (dataset.frame(d.0, d.1).1.clone(), dataset.frame(d.0, d.1).0.params.clone()))
                .collect(),
        };
        for (&(_, d), (img, realized)) in chunk.iter().zip(&outputs) {
            let (rec, truth) = dataset.frame(d.0, d.1);
            acc.sums[3] += apd(realized, &rec.params);
            acc.sums[4] += aed(realized, &rec.params)?;
            if protocol == Protocol::Same {
                acc.sums[0] += l1_255(img, truth)?;
                acc.sums[1] += ssim(img, truth, 1.0)?;
                acc.sums[2] += akd(&landmarks2d(asset, realized, r, r)?, &rec.landmarks)?;
                let mesh = lbs(asset, &rec.params)?;
                let mask = mesh_fragments(&asset.faces, &mesh, rec.params.camera, r, r)?.coverage();
                acc.sums[5] += masked_l1_255(img, truth, &mask)?;
            }
            acc.n += 1;
        }
    }
    let n = acc.n as f64;
    let m = |i: usize| acc.sums[i] / n;
    let same = protocol == Protocol::Same;
    let report = MetricReport {
        protocol,
        pairs: acc.n,
        l1: same.then(|| m(0)),
        ssim: same.then(|| m(1)),
        akd: same.then(|| m(2)),
        apd: m(3),
        aed: m(4),
        masked_l1: same.then(|| m(5)),
    };
    if !report.is_finite() {
        return Err(crate::Error::Invariant(format!("non-finite metrics: {report:?}")));
    }
    Ok(report)
}
