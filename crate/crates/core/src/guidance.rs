//! Guidance patterns rendered from posed meshes: geometric displacement
//! fields, posed neural codes and normalized mean-face coordinates.

use crate::error::{input, Result};
use crate::face_model::{project, Camera, HeadAsset, Mesh};
use crate::raster::{rasterize_fragments, Fragments};
use facewarp_tensor::{CustomOp, Graph, Real, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Latent code width per vertex.
pub const CODE_DIM: usize = 16;
/// Standard deviation of the initial latent codes.
pub const CODE_INIT_STD: f64 = 0.02;

/// Which pattern a [`GuidanceMap`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    GeomDisp,
    NeuralCodes,
    Nmfc,
}

/// A rasterized pattern, `channels x height x width`, zero where uncovered.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceMap {
    pub kind: MapKind,
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub image: Vec<f64>,
    pub coverage: Vec<bool>,
}

impl GuidanceMap {
    fn from_fragments(kind: MapKind, frag: &Fragments, attrs: &[f64], channels: usize) -> Self {
        Self {
            kind,
            channels,
            width: frag.width,
            height: frag.height,
            image: frag.interpolate(attrs, channels),
            coverage: frag.coverage(),
        }
    }

    pub fn pixel(&self, channel: usize, i: usize, j: usize) -> f64 {
        self.image[(channel * self.height + i) * self.width + j]
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_fn(&[1, self.channels, self.height, self.width], |i| T::lit(self.image[i]))
    }

    /// Interleaved 8-bit RGB preview, black where uncovered. Displacements
    /// use a colour wheel (hue is direction, saturation is magnitude relative
    /// to the largest), codes show their first three channels rescaled to the
    /// map's range, NMFC is shown as is.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = vec![0u8; n * 3];
        let byte = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        match self.kind {
            MapKind::GeomDisp => {
                let mag = |k: usize| self.image[k].hypot(self.image[n + k]);
                let max = (0..n).filter(|&k| self.coverage[k]).map(mag).fold(0.0, f64::max);
                for k in (0..n).filter(|&k| self.coverage[k]) {
                    let hue = self.image[n + k].atan2(self.image[k]).to_degrees().rem_euclid(360.0);
                    let sat = if max > 0.0 { mag(k) / max } else { 0.0 };
                    out[3 * k..3 * k + 3].copy_from_slice(&hsv(hue, sat, 1.0).map(byte));
                }
            }
            MapKind::Nmfc | MapKind::NeuralCodes => {
                let shown = self.channels.min(3);
                let (lo, hi) = if self.kind == MapKind::Nmfc {
                    (0.0, 1.0)
                } else {
                    let vals = (0..shown).flat_map(|c| (0..n).filter(|&k| self.coverage[k]).map(move |k| c * n + k));
                    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| (lo.min(self.image[i]), hi.max(self.image[i])))
                };
                let span = if hi > lo { hi - lo } else { 1.0 };
                for k in (0..n).filter(|&k| self.coverage[k]) {
                    for c in 0..shown {
                        out[3 * k + c] = byte((self.image[c * n + k] - lo) / span);
                    }
                }
            }
        }
        out
    }
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Learnable per-vertex embeddings, `codes[v * dim + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralCodes {
    pub dim: usize,
    pub codes: Vec<f64>,
}

impl NeuralCodes {
    pub fn random<R: Rng + ?Sized>(n_vertices: usize, dim: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, CODE_INIT_STD).expect("valid std");
        Self {
            dim,
            codes: (0..n_vertices * dim).map(|_| normal.sample(rng)).collect(),
        }
    }

    pub fn constant(n_vertices: usize, value: &[f64]) -> Self {
        Self {
            dim: value.len(),
            codes: value.iter().copied().cycle().take(n_vertices * value.len()).collect(),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.codes.len() / self.dim.max(1)
    }
}

/// Projected source-minus-driving position of every vertex, in pixels.
pub fn vertex_displacements(
    mesh_s: &Mesh,
    mesh_d: &Mesh,
    cam_s: Camera,
    cam_d: Camera,
    width: usize,
    height: usize,
) -> Result<Vec<[f64; 2]>> {
    if mesh_s.vertices.len() != mesh_d.vertices.len() {
        return Err(input(format!(
            "source mesh has {} vertices, driving mesh {}",
            mesh_s.vertices.len(),
            mesh_d.vertices.len()
        )));
    }
    let ps = project(mesh_s, cam_s, width, height);
    let pd = project(mesh_d, cam_d, width, height);
    Ok(ps.xy.iter().zip(&pd.xy).map(|(s, d)| [s[0] - d[0], s[1] - d[1]]).collect())
}

/// Visibility of `mesh` under `cam` with back-face culling.
pub fn mesh_fragments(faces: &[[u32; 3]], mesh: &Mesh, cam: Camera, width: usize, height: usize) -> Result<Fragments> {
    let p = project(mesh, cam, width, height);
    rasterize_fragments(&p.xy, &p.depth, faces, width, height, true)
}

/// Two-channel displacement image in driving coordinates: each covered pixel
/// holds the offset to the matching source location.
pub fn geom_disp_field(
    faces: &[[u32; 3]],
    mesh_s: &Mesh,
    mesh_d: &Mesh,
    cam_s: Camera,
    cam_d: Camera,
    width: usize,
    height: usize,
) -> Result<GuidanceMap> {
    let disp = vertex_displacements(mesh_s, mesh_d, cam_s, cam_d, width, height)?;
    let frag = mesh_fragments(faces, mesh_d, cam_d, width, height)?;
    let attrs: Vec<f64> = disp.iter().flatten().copied().collect();
    Ok(GuidanceMap::from_fragments(MapKind::GeomDisp, &frag, &attrs, 2))
}

/// Latent codes rasterized over a posed mesh.
pub fn posed_neural_codes(
    codes: &NeuralCodes,
    faces: &[[u32; 3]],
    mesh: &Mesh,
    cam: Camera,
    width: usize,
    height: usize,
) -> Result<GuidanceMap> {
    if codes.num_vertices() != mesh.vertices.len() || codes.codes.len() != codes.dim * mesh.vertices.len() {
        return Err(input(format!(
            "{} code values of width {} for {} vertices",
            codes.codes.len(),
            codes.dim,
            mesh.vertices.len()
        )));
    }
    let frag = mesh_fragments(faces, mesh, cam, width, height)?;
    Ok(GuidanceMap::from_fragments(MapKind::NeuralCodes, &frag, &codes.codes, codes.dim))
}

/// Normalized template coordinates rasterized over a posed mesh.
pub fn nmfc(asset: &HeadAsset, mesh: &Mesh, cam: Camera, width: usize, height: usize) -> Result<GuidanceMap> {
    if mesh.vertices.len() != asset.num_vertices() {
        return Err(input("mesh does not match the asset"));
    }
    let frag = mesh_fragments(&asset.faces, mesh, cam, width, height)?;
    let attrs: Vec<f64> = asset.normalized_template.iter().flatten().copied().collect();
    Ok(GuidanceMap::from_fragments(MapKind::Nmfc, &frag, &attrs, 3))
}

struct CodeRaster {
    fragments: Arc<[Fragments]>,
}

impl<T: Real> CustomOp<T> for CodeRaster {
    fn name(&self) -> &'static str {
        "posed_neural_codes"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad: &Tensor<T>) -> facewarp_tensor::Result<Vec<Option<Tensor<T>>>> {
        let codes = inputs[0];
        let dim = codes.shape()[1];
        let mut g = vec![T::zero(); codes.numel()];
        let per = dim * self.fragments[0].width * self.fragments[0].height;
        for (b, frag) in self.fragments.iter().enumerate() {
            frag.backward_into(&grad.data()[b * per..(b + 1) * per], dim, &mut g);
        }
        Ok(vec![Some(Tensor::from_vec(codes.shape().to_vec(), g)?)])
    }
}

/// Differentiable rendering of `codes` (`[N, d]`) through one set of
/// fragments per batch item, giving `[B, d, H, W]`.
pub fn render_codes<T: Real>(g: &mut Graph<T>, codes: Var, fragments: Arc<[Fragments]>) -> Result<Var> {
    let shape = g.shape(codes).to_vec();
    let Some(first) = fragments.first() else {
        return Err(input("no fragments to render"));
    };
    if shape.len() != 2 {
        return Err(input(format!("codes must be [N, d], got {shape:?}")));
    }
    let (h, w, dim) = (first.height, first.width, shape[1]);
    if fragments.iter().any(|f| f.width != w || f.height != h) {
        return Err(input("fragment sizes differ within a batch"));
    }
    let per = dim * h * w;
    let mut out = vec![T::zero(); fragments.len() * per];
    for (b, frag) in fragments.iter().enumerate() {
        if frag.vertices.iter().flatten().any(|&v| v as usize >= shape[0]) {
            return Err(input("fragments reference vertices beyond the code table"));
        }
        frag.interpolate_into(g.value(codes).data(), dim, &mut out[b * per..(b + 1) * per]);
    }
    let out = Tensor::from_vec(vec![fragments.len(), dim, h, w], out)?;
    Ok(g.custom(&[codes], out, Box::new(CodeRaster { fragments }))?)
}
