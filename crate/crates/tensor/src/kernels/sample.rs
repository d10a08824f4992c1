//! Bilinear sampling: displacement warping and align-corners-false resizing.

use crate::error::{shape_err, Result};
use crate::{Real, Tensor};

/// Bilinear cell along one axis for a sample position, clamped to the border.
#[derive(Debug, Clone, Copy)]
pub struct Cell<T> {
    pub i0: usize,
    pub i1: usize,
    pub frac: T,
    /// False when the position was clamped, so it does not move the sample.
    pub active: bool,
}

#[inline]
pub fn border_cell<T: Real>(pos: T, size: usize) -> Cell<T> {
    if size == 1 {
        return Cell {
            i0: 0,
            i1: 0,
            frac: T::zero(),
            active: false,
        };
    }
    let max = T::from_usize(size - 1).unwrap();
    let (p, active) = if pos < T::zero() {
        (T::zero(), false)
    } else if pos > max {
        (max, false)
    } else {
        (pos, true)
    };
    let i0 = (p.floor().to_usize().unwrap_or(0)).min(size - 2);
    Cell {
        i0,
        i1: i0 + 1,
        frac: p - T::from_usize(i0).unwrap(),
        active,
    }
}

fn warp_dims<T: Real>(x: &Tensor<T>, disp: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    let (b, c, h, w) = x.dims4()?;
    let (db, dc, dh, dw) = disp.dims4()?;
    if (db, dc, dh, dw) != (b, 2, h, w) {
        return Err(shape_err(
            "grid_warp",
            format!("features {:?} need displacement [{b}, 2, {h}, {w}], got {:?}", x.shape(), disp.shape()),
        ));
    }
    Ok((b, c, h, w))
}

/// `out[b, c, y, x] = bilinear(features[b, c], x + disp[b, 0, y, x], y + disp[b, 1, y, x])`.
pub fn grid_warp_forward<T: Real>(x: &Tensor<T>, disp: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = warp_dims(x, disp)?;
    let hw = h * w;
    let mut out = vec![T::zero(); x.numel()];
    let one = T::one();
    for n in 0..b {
        let dx = &disp.data()[(n * 2) * hw..(n * 2 + 1) * hw];
        let dy = &disp.data()[(n * 2 + 1) * hw..(n * 2 + 2) * hw];
        for y in 0..h {
            for xx in 0..w {
                let p = y * w + xx;
                let cx = border_cell(T::from_usize(xx).unwrap() + dx[p], w);
                let cy = border_cell(T::from_usize(y).unwrap() + dy[p], h);
                let (fx, fy) = (cx.frac, cy.frac);
                for ch in 0..c {
                    let plane = &x.data()[(n * c + ch) * hw..(n * c + ch + 1) * hw];
                    let v00 = plane[cy.i0 * w + cx.i0];
                    let v01 = plane[cy.i0 * w + cx.i1];
                    let v10 = plane[cy.i1 * w + cx.i0];
                    let v11 = plane[cy.i1 * w + cx.i1];
                    out[(n * c + ch) * hw + p] = (one - fy) * ((one - fx) * v00 + fx * v01)
                        + fy * ((one - fx) * v10 + fx * v11);
                }
            }
        }
    }
    Tensor::from_vec(x.shape().to_vec(), out)
}

pub fn grid_warp_backward<T: Real>(
    x: &Tensor<T>,
    disp: &Tensor<T>,
    grad_out: &Tensor<T>,
    need: (bool, bool),
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>)> {
    let (b, c, h, w) = warp_dims(x, disp)?;
    let hw = h * w;
    let one = T::one();
    let mut gx = need.0.then(|| vec![T::zero(); x.numel()]);
    let mut gd = need.1.then(|| vec![T::zero(); disp.numel()]);
    for n in 0..b {
        for y in 0..h {
            for xx in 0..w {
                let p = y * w + xx;
                let dxv = disp.data()[(n * 2) * hw + p];
                let dyv = disp.data()[(n * 2 + 1) * hw + p];
                let cx = border_cell(T::from_usize(xx).unwrap() + dxv, w);
                let cy = border_cell(T::from_usize(y).unwrap() + dyv, h);
                let (fx, fy) = (cx.frac, cy.frac);
                let (mut sdx, mut sdy) = (T::zero(), T::zero());
                for ch in 0..c {
                    let base = (n * c + ch) * hw;
                    let g = grad_out.data()[base + p];
                    if let Some(gx) = gx.as_mut() {
                        let plane = &mut gx[base..base + hw];
                        plane[cy.i0 * w + cx.i0] = plane[cy.i0 * w + cx.i0] + g * (one - fy) * (one - fx);
                        plane[cy.i0 * w + cx.i1] = plane[cy.i0 * w + cx.i1] + g * (one - fy) * fx;
                        plane[cy.i1 * w + cx.i0] = plane[cy.i1 * w + cx.i0] + g * fy * (one - fx);
                        plane[cy.i1 * w + cx.i1] = plane[cy.i1 * w + cx.i1] + g * fy * fx;
                    }
                    if gd.is_some() {
                        let plane = &x.data()[base..base + hw];
                        let v00 = plane[cy.i0 * w + cx.i0];
                        let v01 = plane[cy.i0 * w + cx.i1];
                        let v10 = plane[cy.i1 * w + cx.i0];
                        let v11 = plane[cy.i1 * w + cx.i1];
                        if cx.active {
                            sdx = sdx + g * ((one - fy) * (v01 - v00) + fy * (v11 - v10));
                        }
                        if cy.active {
                            sdy = sdy + g * ((one - fx) * (v10 - v00) + fx * (v11 - v01));
                        }
                    }
                }
                if let Some(gd) = gd.as_mut() {
                    gd[(n * 2) * hw + p] = sdx;
                    gd[(n * 2 + 1) * hw + p] = sdy;
                }
            }
        }
    }
    Ok((
        gx.map(|v| Tensor::from_vec(x.shape().to_vec(), v)).transpose()?,
        gd.map(|v| Tensor::from_vec(disp.shape().to_vec(), v)).transpose()?,
    ))
}

/// Hash of the discrete sampling decisions (cell indices and clamping) of a warp.
pub fn grid_warp_branches<T: Real>(disp: &Tensor<T>, mut hash: impl FnMut(u64)) {
    let Ok((b, _, h, w)) = disp.dims4() else { return };
    let hw = h * w;
    for n in 0..b {
        for p in 0..hw {
            let cx = border_cell(T::from_usize(p % w).unwrap() + disp.data()[(n * 2) * hw + p], w);
            let cy = border_cell(T::from_usize(p / w).unwrap() + disp.data()[(n * 2 + 1) * hw + p], h);
            hash(((cx.i0 as u64) << 33) | ((cy.i0 as u64) << 2) | ((cx.active as u64) << 1) | cy.active as u64);
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Tap<T> {
    i0: usize,
    i1: usize,
    lambda: T,
}

fn resize_taps<T: Real>(input: usize, output: usize) -> Vec<Tap<T>> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            Tap {
                i0,
                i1,
                lambda: T::lit(src - i0 as f64),
            }
        })
        .collect()
}

pub fn resize_forward<T: Real>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dims4()?;
    if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
        return Err(shape_err("resize_bilinear", format!("{:?} -> {out_h}x{out_w}", x.shape())));
    }
    let ty = resize_taps::<T>(h, out_h);
    let tx = resize_taps::<T>(w, out_w);
    let one = T::one();
    let mut out = vec![T::zero(); b * c * out_h * out_w];
    for plane in 0..b * c {
        let src = &x.data()[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * out_h * out_w..(plane + 1) * out_h * out_w];
        for (oy, ry) in ty.iter().enumerate() {
            for (ox, rx) in tx.iter().enumerate() {
                let top = (one - rx.lambda) * src[ry.i0 * w + rx.i0] + rx.lambda * src[ry.i0 * w + rx.i1];
                let bot = (one - rx.lambda) * src[ry.i1 * w + rx.i0] + rx.lambda * src[ry.i1 * w + rx.i1];
                dst[oy * out_w + ox] = (one - ry.lambda) * top + ry.lambda * bot;
            }
        }
    }
    Tensor::from_vec(vec![b, c, out_h, out_w], out)
}

pub fn resize_backward<T: Real>(x_shape: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = match x_shape {
        &[b, c, h, w] => (b, c, h, w),
        _ => return Err(shape_err("resize_bilinear", format!("{x_shape:?}"))),
    };
    let (_, _, out_h, out_w) = grad_out.dims4()?;
    let ty = resize_taps::<T>(h, out_h);
    let tx = resize_taps::<T>(w, out_w);
    let one = T::one();
    let mut gx = vec![T::zero(); b * c * h * w];
    for plane in 0..b * c {
        let go = &grad_out.data()[plane * out_h * out_w..(plane + 1) * out_h * out_w];
        let dst = &mut gx[plane * h * w..(plane + 1) * h * w];
        for (oy, ry) in ty.iter().enumerate() {
            for (ox, rx) in tx.iter().enumerate() {
                let g = go[oy * out_w + ox];
                let gt = (one - ry.lambda) * g;
                let gb = ry.lambda * g;
                dst[ry.i0 * w + rx.i0] = dst[ry.i0 * w + rx.i0] + gt * (one - rx.lambda);
                dst[ry.i0 * w + rx.i1] = dst[ry.i0 * w + rx.i1] + gt * rx.lambda;
                dst[ry.i1 * w + rx.i0] = dst[ry.i1 * w + rx.i0] + gb * (one - rx.lambda);
                dst[ry.i1 * w + rx.i1] = dst[ry.i1 * w + rx.i1] + gb * rx.lambda;
            }
        }
    }
    Tensor::from_vec(x_shape.to_vec(), gx)
}
