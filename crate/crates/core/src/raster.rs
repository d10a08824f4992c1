//! Software triangle rasterizer for per-vertex attributes.
//!
//! Pixel `(i, j)` samples at `(j + 0.5, i + 0.5)`. Coverage uses edge
//! functions with a top-left ownership rule, so a pixel centre on an edge
//! shared by two triangles belongs to exactly one of them. Depth is
//! interpolated affinely; the nearest fragment wins and ties keep the
//! lower triangle index. Attribute gradients flow back through the cached
//! winning triangle and barycentric weights.

use crate::error::{input, Error, Result};
use facewarp_tensor::Real;
use std::path::Path;

/// Marker for pixels no triangle covers.
pub const NO_TRIANGLE: u32 = u32::MAX;

/// Per-pixel result of the visibility pass, independent of attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragments {
    pub width: usize,
    pub height: usize,
    /// Winning triangle per pixel, [`NO_TRIANGLE`] when uncovered.
    pub triangle: Vec<u32>,
    /// Vertex indices of the winning triangle.
    pub vertices: Vec<[u32; 3]>,
    /// Barycentric weights matching `vertices`.
    pub bary: Vec<[f64; 3]>,
    /// Interpolated depth, `+inf` when uncovered.
    pub depth: Vec<f64>,
}

/// Geometry plus `channels` attributes per vertex (`attributes[v * channels + c]`).
#[derive(Debug, Clone)]
pub struct AttributeMesh<'a> {
    pub positions: &'a [[f64; 2]],
    pub depth: &'a [f64],
    pub faces: &'a [[u32; 3]],
    pub attributes: &'a [f64],
    pub channels: usize,
}

#[derive(Debug, Clone)]
pub struct RasterOutput {
    /// `channels x height x width`, zero where uncovered.
    pub image: Vec<f64>,
    pub channels: usize,
    pub coverage: Vec<bool>,
    pub depth_buffer: Vec<f64>,
    fragments: Option<Fragments>,
}

/// Signed edge function: positive when `p` is to the right of `u -> v` in a
/// y-down frame.
#[inline]
pub fn edge(u: [f64; 2], v: [f64; 2], p: [f64; 2]) -> f64 {
    (v[0] - u[0]) * (p[1] - u[1]) - (v[1] - u[1]) * (p[0] - u[0])
}

#[inline]
fn is_top_left(u: [f64; 2], v: [f64; 2]) -> bool {
    let (dx, dy) = (v[0] - u[0], v[1] - u[1]);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

#[inline]
fn owns(w: f64, top_left: bool) -> bool {
    w > 0.0 || (w == 0.0 && top_left)
}

/// Visibility pass: nearest covering triangle and barycentric weights per pixel.
///
/// A triangle is front facing when it winds counter-clockwise on screen,
/// i.e. `edge(a, b, c) < 0` with y pointing down.
pub fn rasterize_fragments(
    positions: &[[f64; 2]],
    depth: &[f64],
    faces: &[[u32; 3]],
    width: usize,
    height: usize,
    cull_backfaces: bool,
) -> Result<Fragments> {
    if width == 0 || height == 0 {
        return Err(input("raster size must be at least 1x1"));
    }
    if positions.len() != depth.len() {
        return Err(input("positions and depth differ in length"));
    }
    if positions.iter().flatten().chain(depth).any(|v| !v.is_finite()) {
        return Err(input("non-finite vertex position or depth"));
    }
    if faces.iter().flatten().any(|&i| i as usize >= positions.len()) {
        return Err(input("face index out of range"));
    }
    let npix = width * height;
    let mut frag = Fragments {
        width,
        height,
        triangle: vec![NO_TRIANGLE; npix],
        vertices: vec![[0; 3]; npix],
        bary: vec![[0.0; 3]; npix],
        depth: vec![f64::INFINITY; npix],
    };
    for (t, face) in faces.iter().enumerate() {
        let mut idx = *face;
        let area = edge(positions[idx[0] as usize], positions[idx[1] as usize], positions[idx[2] as usize]);
        if area == 0.0 || (cull_backfaces && area > 0.0) {
            continue;
        }
        // Canonical order has positive area; remember how to undo the swap.
        let swapped = area < 0.0;
        if swapped {
            idx.swap(1, 2);
        }
        let [a, b, c] = idx.map(|i| positions[i as usize]);
        let [za, zb, zc] = idx.map(|i| depth[i as usize]);
        let area = area.abs();
        let tl = [is_top_left(b, c), is_top_left(c, a), is_top_left(a, b)];

        let lo_x = a[0].min(b[0]).min(c[0]);
        let hi_x = a[0].max(b[0]).max(c[0]);
        let lo_y = a[1].min(b[1]).min(c[1]);
        let hi_y = a[1].max(b[1]).max(c[1]);
        if hi_x < 0.0 || hi_y < 0.0 || lo_x > width as f64 || lo_y > height as f64 {
            continue;
        }
        let j0 = ((lo_x - 0.5).floor().max(0.0)) as usize;
        let j1 = ((hi_x - 0.5).ceil().min(width as f64 - 1.0)) as usize;
        let i0 = ((lo_y - 0.5).floor().max(0.0)) as usize;
        let i1 = ((hi_y - 0.5).ceil().min(height as f64 - 1.0)) as usize;
        for i in i0..=i1 {
            let py = i as f64 + 0.5;
            for j in j0..=j1 {
                let p = [j as f64 + 0.5, py];
                let w0 = edge(b, c, p);
                let w1 = edge(c, a, p);
                let w2 = edge(a, b, p);
                if !(owns(w0, tl[0]) && owns(w1, tl[1]) && owns(w2, tl[2])) {
                    continue;
                }
                let bary = [w0 / area, w1 / area, w2 / area];
                let z = bary[0] * za + bary[1] * zb + bary[2] * zc;
                let k = i * width + j;
                if z < frag.depth[k] {
                    frag.depth[k] = z;
                    frag.triangle[k] = t as u32;
                    frag.vertices[k] = *face;
                    frag.bary[k] = if swapped { [bary[0], bary[2], bary[1]] } else { bary };
                }
            }
        }
    }
    Ok(frag)
}

impl Fragments {
    pub fn covered(&self, pixel: usize) -> bool {
        self.triangle[pixel] != NO_TRIANGLE
    }

    pub fn coverage(&self) -> Vec<bool> {
        self.triangle.iter().map(|&t| t != NO_TRIANGLE).collect()
    }

    pub fn num_covered(&self) -> usize {
        self.triangle.iter().filter(|&&t| t != NO_TRIANGLE).count()
    }

    /// Interpolate `channels` attributes per vertex into a `channels x H x W` image.
    pub fn interpolate<T: Real>(&self, attributes: &[T], channels: usize) -> Vec<T> {
        let npix = self.width * self.height;
        let mut out = vec![T::zero(); channels * npix];
        self.interpolate_into(attributes, channels, &mut out);
        out
    }

    /// As [`Fragments::interpolate`] but writing into `out`, which must hold
    /// `channels * H * W` values.
    pub fn interpolate_into<T: Real>(&self, attributes: &[T], channels: usize, out: &mut [T]) {
        let npix = self.width * self.height;
        for k in 0..npix {
            if self.triangle[k] == NO_TRIANGLE {
                continue;
            }
            let [v0, v1, v2] = self.vertices[k].map(|v| v as usize * channels);
            let [b0, b1, b2] = self.bary[k].map(T::lit);
            for ch in 0..channels {
                out[ch * npix + k] = b0 * attributes[v0 + ch] + b1 * attributes[v1 + ch] + b2 * attributes[v2 + ch];
            }
        }
    }

    /// Scatter an image gradient back to per-vertex attribute gradients.
    pub fn backward<T: Real>(&self, grad: &[T], n_vertices: usize, channels: usize) -> Vec<T> {
        let mut out = vec![T::zero(); n_vertices * channels];
        self.backward_into(grad, channels, &mut out);
        out
    }

    /// Accumulate (`+=`) attribute gradients into `out`.
    pub fn backward_into<T: Real>(&self, grad: &[T], channels: usize, out: &mut [T]) {
        let npix = self.width * self.height;
        for k in 0..npix {
            if self.triangle[k] == NO_TRIANGLE {
                continue;
            }
            let verts = self.vertices[k];
            for (&v, &b) in verts.iter().zip(&self.bary[k]) {
                let b = T::lit(b);
                let base = v as usize * channels;
                for ch in 0..channels {
                    out[base + ch] = out[base + ch] + b * grad[ch * npix + k];
                }
            }
        }
    }
}

/// Rasterize per-vertex attributes with z-buffering.
pub fn rasterize(mesh: &AttributeMesh<'_>, width: usize, height: usize, cull_backfaces: bool) -> Result<RasterOutput> {
    if mesh.channels == 0 {
        return Err(input("attribute mesh needs at least one channel"));
    }
    if mesh.attributes.len() != mesh.positions.len() * mesh.channels {
        return Err(input(format!(
            "{} attribute values for {} vertices x {} channels",
            mesh.attributes.len(),
            mesh.positions.len(),
            mesh.channels
        )));
    }
    let frag = rasterize_fragments(mesh.positions, mesh.depth, mesh.faces, width, height, cull_backfaces)?;
    let image = frag.interpolate(mesh.attributes, mesh.channels);
    Ok(RasterOutput {
        image,
        channels: mesh.channels,
        coverage: frag.coverage(),
        depth_buffer: frag.depth.clone(),
        fragments: Some(frag),
    })
}

/// Gradient of the rasterized image with respect to the vertex attributes.
/// Geometry receives no gradient.
pub fn rasterize_backward(output: &RasterOutput, output_grad: &[f64], n_vertices: usize) -> Result<Vec<f64>> {
    let frag = output
        .fragments
        .as_ref()
        .ok_or_else(|| Error::Input("rasterize_backward needs the cached forward pass".into()))?;
    if output_grad.len() != output.image.len() {
        return Err(input("gradient does not match the raster image size"));
    }
    Ok(frag.backward(output_grad, n_vertices, output.channels))
}

impl RasterOutput {
    pub fn fragments(&self) -> Option<&Fragments> {
        self.fragments.as_ref()
    }

    /// Drop the cached visibility data; a later backward call will fail.
    pub fn release_cache(&mut self) {
        self.fragments = None;
    }

    /// Write the coverage mask as grayscale and the first three attribute
    /// channels (each min-max scaled over covered pixels) as RGB.
    pub fn save_debug(&self, width: usize, height: usize, coverage_path: &Path, color_path: &Path) -> Result<()> {
        let npix = width * height;
        if self.coverage.len() != npix {
            return Err(input("debug dump size mismatch"));
        }
        let mask: Vec<u8> = self.coverage.iter().map(|&c| if c { 255 } else { 0 }).collect();
        image::GrayImage::from_raw(width as u32, height as u32, mask)
            .expect("buffer sized to the raster")
            .save(coverage_path)?;
        let mut rgb = vec![0u8; npix * 3];
        for ch in 0..self.channels.min(3) {
            let plane = &self.image[ch * npix..(ch + 1) * npix];
            let covered = || plane.iter().zip(&self.coverage).filter(|(_, &c)| c).map(|(&v, _)| v);
            let lo = covered().fold(f64::INFINITY, f64::min);
            let hi = covered().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            for k in 0..npix {
                if self.coverage[k] {
                    rgb[k * 3 + ch] = (((plane[k] - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        image::RgbImage::from_raw(width as u32, height as u32, rgb)
            .expect("buffer sized to the raster")
            .save(color_path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_edge_belongs_to_one_triangle() {
        // Two triangles splitting a square along its diagonal, which passes
        // through pixel centres.
        let pos = [[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]];
        let depth = [0.0; 4];
        let faces = [[0, 2, 1], [0, 3, 2]];
        let f = rasterize_fragments(&pos, &depth, &faces, 4, 4, true).unwrap();
        assert_eq!(f.num_covered(), 16);
        assert!(f.triangle.iter().all(|&t| t != NO_TRIANGLE));
    }

    #[test]
    fn barycentric_order_follows_face() {
        let pos = [[0.0, 0.0], [0.0, 8.0], [8.0, 0.0]];
        let f = rasterize_fragments(&pos, &[0.0; 3], &[[0, 1, 2]], 8, 8, true).unwrap();
        let k = 0; // pixel centre (0.5, 0.5) sits next to vertex 0
        assert!(f.bary[k][0] > 0.8);
        let img = f.interpolate(&[1.0f64, 0.0, 0.0], 1);
        assert!((img[k] - f.bary[k][0]).abs() < 1e-15);
    }

    #[test]
    fn backward_requires_cache() {
        let pos = [[0.0, 0.0], [0.0, 4.0], [4.0, 0.0]];
        let mesh = AttributeMesh {
            positions: &pos,
            depth: &[0.0; 3],
            faces: &[[0, 1, 2]],
            attributes: &[1.0, 2.0, 3.0],
            channels: 1,
        };
        let mut out = rasterize(&mesh, 4, 4, true).unwrap();
        assert!(rasterize_backward(&out, &vec![0.0; 16], 3).is_ok());
        out.release_cache();
        assert!(rasterize_backward(&out, &vec![0.0; 16], 3).is_err());
    }
}
