//! Lambertian vertex-color rendering of the posed head over a background.

use crate::error::{Error, Result};
use crate::face_model::{lbs, project, FaceParams, HeadAsset, Mesh};
use crate::raster::{rasterize, AttributeMesh};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Supersampling factor per axis.
pub const SUPERSAMPLE: usize = 2;
const LIGHT: [f64; 3] = [-0.3, 0.5, 0.8];
const AMBIENT: f64 = 0.4;
const DIFFUSE: f64 = 0.6;

/// A `3 x height x width` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for c in 0..3 {
            for i in 0..height {
                for j in 0..width {
                    data.push(f(c, i, j));
                }
            }
        }
        Self { width, height, data }
    }

    pub fn at(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.height + i) * self.width + j]
    }

    /// Average non-overlapping `k x k` blocks.
    pub fn box_downsample(&self, k: usize) -> Self {
        let (w, h) = (self.width / k, self.height / k);
        let norm = 1.0 / (k * k) as f64;
        Self::from_fn(w, h, |c, i, j| {
            let mut acc = 0.0;
            for di in 0..k {
                for dj in 0..k {
                    acc += self.at(c, i * k + di, j * k + dj);
                }
            }
            acc * norm
        })
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let px = |c| (self.at(c, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
            image::Rgb([px(0), px(1), px(2)])
        })
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        Self::from_fn(img.width() as usize, img.height() as usize, |c, i, j| {
            img.get_pixel(j as u32, i as u32)[c] as f64 / 255.0
        })
    }

    pub fn save_png(&self, path: &std::path::Path) -> Result<()> {
        self.to_rgb8().save(path)?;
        Ok(())
    }

    pub fn load_png(path: &std::path::Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }
}

/// Mid-gray plus a few seeded low-frequency sinusoids, defined on the
/// continuous `[0, 1]^2` square so it can be sampled at any resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    /// `(fx, fy, phase, amplitude per channel)`.
    pub waves: Vec<([f64; 3], [f64; 3])>,
}

impl Background {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let waves = (0..6)
            .map(|_| {
                let f = [rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0), rng.gen_range(0.0..std::f64::consts::TAU)];
                let a = rng.gen_range(0.03..0.07);
                let tint = [a * rng.gen_range(0.6..1.0), a * rng.gen_range(0.6..1.0), a * rng.gen_range(0.6..1.0)];
                (f, tint)
            })
            .collect();
        Self { waves }
    }

    pub fn sample(&self, c: usize, u: f64, v: f64) -> f64 {
        0.5 + self.waves.iter().map(|(f, a)| a[c] * (f[0] * u + f[1] * v + f[2]).sin()).sum::<f64>()
    }

    pub fn render(&self, width: usize, height: usize) -> Image {
        Image::from_fn(width, height, |c, i, j| {
            self.sample(c, (j as f64 + 0.5) / width as f64, (i as f64 + 0.5) / height as f64)
        })
    }
}

fn gauss2(dx: f64, dy: f64, sigma: f64) -> f64 {
    (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

/// Smooth random per-vertex albedo: skin tone with blotches, hair, eyes,
/// brows and lips placed on the template.
pub fn random_vertex_colors<R: Rng + ?Sized>(asset: &HeadAsset, rng: &mut R) -> Vec<[f64; 3]> {
    let r = rng.gen_range(0.55..0.9);
    let skin = [r, r * rng.gen_range(0.68..0.85), r * rng.gen_range(0.5..0.72)];
    let hv = rng.gen_range(0.05..0.45);
    let hair = [hv, hv * rng.gen_range(0.6..0.9), hv * rng.gen_range(0.3..0.8)];
    let hairline = rng.gen_range(0.45..0.62);
    let lips = [rng.gen_range(0.55..0.8), rng.gen_range(0.15..0.3), rng.gen_range(0.2..0.35)];
    let blobs: Vec<([f64; 3], [f64; 3])> = (0..5)
        .map(|_| {
            let c = [rng.gen_range(-0.8..0.8), rng.gen_range(-0.9..0.9), rng.gen_range(-0.8..0.8)];
            let a = rng.gen_range(-0.12..0.12);
            (c, [a, a * 0.8, a * 0.6])
        })
        .collect();
    asset
        .template
        .iter()
        .map(|&[x, y, z]| {
            let mut col = skin;
            for (c, a) in &blobs {
                let d2 = (x - c[0]).powi(2) + (y - c[1]).powi(2) + (z - c[2]).powi(2);
                let w = (-d2 / (2.0 * 0.3 * 0.3)).exp();
                for k in 0..3 {
                    col[k] += a[k] * w;
                }
            }
            let front = (z / 0.35).clamp(0.0, 1.0);
            let lip = front * gauss2(x / 1.6, y + 0.4, 0.07);
            col = mix(col, lips, lip.min(1.0));
            let brow = front * (gauss2(x - 0.26, (y - 0.36) * 2.0, 0.08) + gauss2(x + 0.26, (y - 0.36) * 2.0, 0.08));
            col = mix(col, hair, (0.8 * brow).min(1.0));
            for ex in [0.26, -0.26] {
                let white = front * gauss2(x - ex, y - 0.18, 0.08);
                col = mix(col, [0.92, 0.92, 0.9], (1.4 * white).min(1.0));
                let iris = front * gauss2(x - ex, y - 0.18, 0.04);
                col = mix(col, [0.12, 0.1, 0.1], (1.5 * iris).min(1.0));
            }
            let top = smoothstep(hairline - 0.08, hairline + 0.08, y / 0.9);
            let back = smoothstep(0.05, -0.25, z) * smoothstep(-0.55, -0.3, y / 0.9);
            col = mix(col, hair, top.max(back));
            col.map(|v| v.clamp(0.0, 1.0))
        })
        .collect()
}

/// Area-weighted vertex normals of a posed mesh.
pub fn vertex_normals(mesh: &Mesh, faces: &[[u32; 3]]) -> Vec<[f64; 3]> {
    let mut n = vec![[0.0; 3]; mesh.vertices.len()];
    for f in faces {
        let [a, b, c] = f.map(|i| mesh.vertices[i as usize]);
        let e1 = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let e2 = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let cr = [e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2], e1[0] * e2[1] - e1[1] * e2[0]];
        for &i in f {
            for k in 0..3 {
                n[i as usize][k] += cr[k];
            }
        }
    }
    for v in &mut n {
        let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-12);
        *v = v.map(|x| x / len);
    }
    n
}

/// Everything needed to render one identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub vertex_colors: Vec<[f64; 3]>,
}

/// Render at `SUPERSAMPLE` times the target size and box-filter down.
/// Returns the image and the number of covered face pixels at full
/// supersampled resolution.
pub fn render_frame(
    asset: &HeadAsset,
    params: &FaceParams,
    appearance: &Appearance,
    background: &Background,
    resolution: usize,
) -> Result<(Image, usize)> {
    let mesh = lbs(asset, params)?;
    render_mesh(asset, &mesh, params, appearance, background, resolution)
}

pub(crate) fn render_mesh(
    asset: &HeadAsset,
    mesh: &Mesh,
    params: &FaceParams,
    appearance: &Appearance,
    background: &Background,
    resolution: usize,
) -> Result<(Image, usize)> {
    let big = resolution * SUPERSAMPLE;
    let normals = vertex_normals(mesh, &asset.faces);
    let len = LIGHT.iter().map(|v| v * v).sum::<f64>().sqrt();
    let light = LIGHT.map(|v| v / len);
    let shaded: Vec<f64> = normals
        .iter()
        .zip(&appearance.vertex_colors)
        .flat_map(|(n, col)| {
            let lambert = (n[0] * light[0] + n[1] * light[1] + n[2] * light[2]).max(0.0);
            let s = AMBIENT + DIFFUSE * lambert;
            col.map(|c| (c * s).min(1.0))
        })
        .collect();
    let p = project(mesh, params.camera, big, big);
    let out = rasterize(
        &AttributeMesh {
            positions: &p.xy,
            depth: &p.depth,
            faces: &asset.faces,
            attributes: &shaded,
            channels: 3,
        },
        big,
        big,
        true,
    )?;
    let covered = out.coverage.iter().filter(|&&c| c).count();
    let bg = background.render(big, big);
    let plane = big * big;
    let full = Image::from_fn(big, big, |c, i, j| {
        let px = i * big + j;
        if out.coverage[px] {
            out.image[c * plane + px]
        } else {
            bg.at(c, i, j)
        }
    });
    Ok((full.box_downsample(SUPERSAMPLE), covered))
}
