//! Synthetic multi-identity video dataset: rendering, storage and batching.

use super::render::{random_vertex_colors, render_frame, Appearance, Background, Image};
use crate::error::{input, Error, Result};
use crate::face_model::{landmarks2d, FaceParams, HeadAsset, JAW};
use crate::network::GuidanceKind;
use crate::training::{Batch, BatchGeometry, DataConfig};
use facewarp_tensor::Tensor;
use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

/// Sampling ranges for per-frame parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseRanges {
    /// Rotation about y (radians, symmetric).
    pub yaw: f64,
    /// Rotation about x.
    pub pitch: f64,
    /// Rotation about z.
    pub roll: f64,
    pub jaw_max: f64,
    pub beta: f64,
    pub psi: f64,
    pub scale: (f64, f64),
    pub translation: f64,
}

impl Default for PoseRanges {
    fn default() -> Self {
        Self {
            yaw: 0.5,
            pitch: 0.3,
            roll: 0.2,
            jaw_max: 0.4,
            beta: 1.5,
            psi: 1.5,
            scale: (0.8, 0.95),
            translation: 0.08,
        }
    }
}

/// Axis-angle of `Rz(roll) * Ry(yaw) * Rx(pitch)`.
pub fn head_rotation(pitch: f64, yaw: f64, roll: f64) -> [f64; 3] {
    let v = Rotation3::from_euler_angles(pitch, yaw, roll).scaled_axis();
    [v.x, v.y, v.z]
}

pub fn sample_frame_params<R: Rng + ?Sized>(asset: &HeadAsset, beta: &[f64], r: &PoseRanges, rng: &mut R) -> FaceParams {
    let mut p = FaceParams::neutral(asset);
    p.beta = beta.to_vec();
    let pitch = rng.gen_range(-r.pitch..=r.pitch);
    let yaw = rng.gen_range(-r.yaw..=r.yaw);
    let roll = rng.gen_range(-r.roll..=r.roll);
    p.theta[0] = head_rotation(pitch, yaw, roll);
    if asset.num_joints() > JAW {
        p.theta[JAW] = [rng.gen_range(0.0..=r.jaw_max), 0.0, 0.0];
    }
    for v in &mut p.psi {
        *v = rng.gen_range(-r.psi..=r.psi);
    }
    p.camera.scale = rng.gen_range(r.scale.0..=r.scale.1);
    p.camera.tx = rng.gen_range(-r.translation..=r.translation);
    p.camera.ty = rng.gen_range(-r.translation..=r.translation);
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    /// Image path relative to the dataset directory.
    pub image: String,
    pub params: FaceParams,
    /// Landmark pixel positions of the rendered head.
    pub landmarks: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub id: usize,
    pub held_out: bool,
    pub beta: Vec<f64>,
    pub appearance: Appearance,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config: DataConfig,
    pub background: Background,
    pub identities: Vec<IdentityRecord>,
}

/// A manifest with its decoded images (`[0, 1]` RGB).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub images: Vec<Vec<Image>>,
}

/// Independent seed for identity `id`, so identities can be generated in any
/// order or in parallel.
fn identity_seed(master: u64, id: usize) -> u64 {
    master ^ (id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn generate_identity(asset: &HeadAsset, cfg: &DataConfig, background: &Background, id: usize) -> Result<(IdentityRecord, Vec<Image>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(identity_seed(cfg.seed, id));
    let ranges = PoseRanges::default();
    let beta: Vec<f64> = (0..asset.n_shape).map(|_| rng.gen_range(-ranges.beta..=ranges.beta)).collect();
    let appearance = Appearance {
        vertex_colors: random_vertex_colors(asset, &mut rng),
    };
    let r = cfg.resolution;
    let mut frames = Vec::with_capacity(cfg.frames_per_identity);
    let mut images = Vec::with_capacity(cfg.frames_per_identity);
    for f in 0..cfg.frames_per_identity {
        let params = sample_frame_params(asset, &beta, &ranges, &mut rng);
        let (img, covered) = render_frame(asset, &params, &appearance, background, r)?;
        // Keep exactly what the PNG stores so in-memory and on-disk data agree.
        let img = Image::from_rgb8(&img.to_rgb8());
        let landmarks = landmarks2d(asset, &params, r, r)?;
        if covered == 0 {
            return Err(Error::Invariant(format!("identity {id} frame {f} has no face coverage")));
        }
        if landmarks.iter().flatten().any(|&v| !(0.0..=r as f64).contains(&v)) {
            return Err(Error::Invariant(format!("identity {id} frame {f} has landmarks outside the viewport")));
        }
        frames.push(FrameRecord {
            image: format!("id{id:03}/frame{f:03}.png"),
            params,
            landmarks,
        });
        images.push(img);
    }
    let record = IdentityRecord {
        id,
        held_out: id >= cfg.identities - cfg.held_out,
        beta,
        appearance,
        frames,
    };
    Ok((record, images))
}

/// Render a dataset in memory. Identities are generated on worker threads,
/// each from its own seed.
pub fn generate_dataset(asset: &HeadAsset, cfg: &DataConfig) -> Result<Dataset> {
    if cfg.identities == 0 || cfg.frames_per_identity == 0 || cfg.held_out >= cfg.identities || cfg.resolution == 0 {
        return Err(input("dataset needs identities, frames and at least one training identity"));
    }
    let background = Background::random(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cfg.identities);
    let ids: Vec<usize> = (0..cfg.identities).collect();
    let chunk = cfg.identities.div_ceil(workers);
    let results: Vec<Result<(IdentityRecord, Vec<Image>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = ids
            .chunks(chunk)
            .map(|part| {
                let background = &background;
                s.spawn(move || part.iter().map(|&id| generate_identity(asset, cfg, background, id)).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("dataset worker panicked")).collect()
    });
    let mut identities = Vec::with_capacity(cfg.identities);
    let mut images = Vec::with_capacity(cfg.identities);
    for r in results {
        let (rec, imgs) = r?;
        identities.push(rec);
        images.push(imgs);
    }
    Ok(Dataset {
        manifest: Manifest {
            version: MANIFEST_VERSION,
            config: cfg.clone(),
            background,
            identities,
        },
        images,
    })
}

impl Dataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (rec, imgs) in self.manifest.identities.iter().zip(&self.images) {
            std::fs::create_dir_all(dir.join(format!("id{:03}", rec.id)))?;
            for (f, img) in rec.frames.iter().zip(imgs) {
                img.save_png(&dir.join(&f.image))?;
            }
        }
        let json = serde_json::to_vec_pretty(&self.manifest)?;
        std::fs::write(dir.join(MANIFEST_FILE), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(&path)?).map_err(|e| Error::Format {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Format {
                path,
                detail: format!("unsupported manifest version {}", manifest.version),
            });
        }
        let r = manifest.config.resolution;
        let mut images = Vec::with_capacity(manifest.identities.len());
        for rec in &manifest.identities {
            if rec.frames.iter().any(|f| f.params.beta != rec.beta) {
                return Err(Error::Format {
                    path: path.clone(),
                    detail: format!("identity {} has frames with a different shape", rec.id),
                });
            }
            let mut imgs = Vec::with_capacity(rec.frames.len());
            for f in &rec.frames {
                let p: PathBuf = dir.join(&f.image);
                let img = Image::load_png(&p)?;
                if img.width != r || img.height != r {
                    return Err(Error::Format {
                        path: p,
                        detail: format!("expected {r}x{r}, got {}x{}", img.width, img.height),
                    });
                }
                imgs.push(img);
            }
            images.push(imgs);
        }
        Ok(Self { manifest, images })
    }

    pub fn resolution(&self) -> usize {
        self.manifest.config.resolution
    }

    pub fn training_identities(&self) -> Vec<usize> {
        self.manifest.identities.iter().filter(|r| !r.held_out).map(|r| r.id).collect()
    }

    pub fn held_out_identities(&self) -> Vec<usize> {
        self.manifest.identities.iter().filter(|r| r.held_out).map(|r| r.id).collect()
    }

    pub fn frame(&self, id: usize, f: usize) -> (&FrameRecord, &Image) {
        (&self.manifest.identities[id].frames[f], &self.images[id][f])
    }

    /// Random same-identity (source, target) frame pairs from training
    /// identities, `size` at a time.
    pub fn sample_pairs<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<FramePair> {
        let ids = self.training_identities();
        (0..size)
            .map(|_| {
                let id = ids[rng.gen_range(0..ids.len())];
                let n = self.manifest.identities[id].frames.len();
                let s = rng.gen_range(0..n);
                let mut t = rng.gen_range(0..n - 1);
                if t >= s {
                    t += 1;
                }
                FramePair {
                    source: (id, s),
                    target: (id, t),
                }
            })
            .collect()
    }

    /// Build a training batch: images to `[-1, 1]` and guidance geometry.
    pub fn batch(&self, asset: &HeadAsset, kind: GuidanceKind, pairs: &[FramePair]) -> Result<Batch> {
        let params: Vec<(&FaceParams, &FaceParams)> = pairs
            .iter()
            .map(|p| (&self.frame(p.source.0, p.source.1).0.params, &self.frame(p.target.0, p.target.1).0.params))
            .collect();
        let geometry = BatchGeometry::build(asset, kind, self.resolution(), &params)?;
        let stack = |sel: fn(&FramePair) -> (usize, usize)| {
            let items: Vec<Tensor<f32>> = pairs.iter().map(|p| to_model_tensor(self.frame(sel(p).0, sel(p).1).1)).collect();
            Tensor::stack_batch(&items)
        };
        Ok(Batch {
            source: stack(|p| p.source)?,
            target: stack(|p| p.target)?,
            geometry,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramePair {
    pub source: (usize, usize),
    pub target: (usize, usize),
}

/// `[1, 3, H, W]` in `[-1, 1]`.
pub fn to_model_tensor(img: &Image) -> Tensor<f32> {
    Tensor::from_fn(&[1, 3, img.height, img.width], |i| (img.data[i] * 2.0 - 1.0) as f32)
}

/// Inverse of [`to_model_tensor`] for batch item `b`.
pub fn from_model_tensor(t: &Tensor<f32>, b: usize) -> Result<Image> {
    let (_, c, h, w) = t.dims4()?;
    if c != 3 {
        return Err(input("expected a 3-channel image tensor"));
    }
    let plane = 3 * h * w;
    let data = t.data()[b * plane..(b + 1) * plane].iter().map(|&v| ((v as f64 + 1.0) / 2.0).clamp(0.0, 1.0)).collect();
    Ok(Image { width: w, height: h, data })
}
