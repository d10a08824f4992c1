//! Image and geometry metrics.

use super::render::Image;
use crate::error::{input, Result};
use crate::face_model::{head_angles_deg, FaceParams};

const SSIM_SIGMA: f64 = 1.5;
const SSIM_RADIUS: usize = 5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn same_size(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(input(format!("images differ in size: {}x{} vs {}x{}", a.width, a.height, b.width, b.height)));
    }
    Ok(())
}

/// Mean absolute difference on the 0..255 scale.
pub fn l1_255(a: &Image, b: &Image) -> Result<f64> {
    same_size(a, b)?;
    let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum();
    Ok(255.0 * s / a.data.len() as f64)
}

/// [`l1_255`] restricted to pixels where `mask` is set (all channels).
/// Returns 0 for an empty mask.
pub fn masked_l1_255(a: &Image, b: &Image, mask: &[bool]) -> Result<f64> {
    same_size(a, b)?;
    let plane = a.width * a.height;
    if mask.len() != plane {
        return Err(input("mask size differs from the image"));
    }
    let (mut s, mut n) = (0.0, 0usize);
    for c in 0..3 {
        for (p, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            s += (a.data[c * plane + p] - b.data[c * plane + p]).abs();
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { 255.0 * s / n as f64 })
}

fn gaussian_kernel() -> Vec<f64> {
    let k: Vec<f64> = (0..=2 * SSIM_RADIUS)
        .map(|i| {
            let d = i as f64 - SSIM_RADIUS as f64;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Half-sample symmetric index: `d c b a | a b c d | d c b a`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn gaussian_filter(x: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            tmp[i * w + j] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * x[i * w + reflect(j as isize + t as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            out[i * w + j] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * tmp[reflect(i as isize + t as isize - r, h) * w + j])
                .sum();
        }
    }
    out
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// `K1 = 0.01`, `K2 = 0.03`, averaged over channels. Border pixels within
/// the window radius are excluded from the mean.
pub fn ssim(a: &Image, b: &Image, data_range: f64) -> Result<f64> {
    same_size(a, b)?;
    let (h, w) = (a.height, a.width);
    if h <= 2 * SSIM_RADIUS || w <= 2 * SSIM_RADIUS {
        return Err(input(format!("SSIM needs images larger than {0}x{0}", 2 * SSIM_RADIUS + 1)));
    }
    let k = gaussian_kernel();
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let plane = h * w;
    let mut total = 0.0;
    for c in 0..3 {
        let x = &a.data[c * plane..(c + 1) * plane];
        let y = &b.data[c * plane..(c + 1) * plane];
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
        let ux = gaussian_filter(x, h, w, &k);
        let uy = gaussian_filter(y, h, w, &k);
        let uxx = gaussian_filter(&prod(x, x), h, w, &k);
        let uyy = gaussian_filter(&prod(y, y), h, w, &k);
        let uxy = gaussian_filter(&prod(x, y), h, w, &k);
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in SSIM_RADIUS..h - SSIM_RADIUS {
            for j in SSIM_RADIUS..w - SSIM_RADIUS {
                let p = i * w + j;
                let (mx, my) = (ux[p], uy[p]);
                let vx = uxx[p] - mx * mx;
                let vy = uyy[p] - my * my;
                let vxy = uxy[p] - mx * my;
                let num = (2.0 * mx * my + c1) * (2.0 * vxy + c2);
                let den = (mx * mx + my * my + c1) * (vx + vy + c2);
                sum += num / den;
                n += 1;
            }
        }
        total += sum / n as f64;
    }
    Ok(total / 3.0)
}

/// Mean over landmarks of the L1 distance `|dx| + |dy|`, in pixels.
pub fn akd(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(input("landmark sets must be non-empty and of equal length"));
    }
    Ok(a.iter().zip(b).map(|(p, q)| (p[0] - q[0]).abs() + (p[1] - q[1]).abs()).sum::<f64>() / a.len() as f64)
}

/// Mean absolute difference of the global head rotation angles, in degrees.
pub fn apd(a: &FaceParams, b: &FaceParams) -> f64 {
    let (x, y) = (head_angles_deg(a), head_angles_deg(b));
    x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / 3.0
}

/// Mean absolute difference of the expression coefficients.
pub fn aed(a: &FaceParams, b: &FaceParams) -> Result<f64> {
    if a.psi.len() != b.psi.len() {
        return Err(input("expression vectors differ in length"));
    }
    if a.psi.is_empty() {
        return Ok(0.0);
    }
    Ok(a.psi.iter().zip(&b.psi).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.psi.len() as f64)
}
