use crate::error::{shape_err, Result};
use crate::{Real, Tensor};

pub const CHANNEL_NORM_EPS: f64 = 1e-5;

/// Parameter-free normalization of each channel over batch and spatial extent.
///
/// Returns the normalized tensor and the per-channel inverse standard deviation.
pub fn channel_norm_forward<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
    let (b, c, h, w) = x.dims4()?;
    let hw = h * w;
    let count = T::from_usize(b * hw).unwrap();
    let eps = T::lit(CHANNEL_NORM_EPS);
    let mut out = vec![T::zero(); x.numel()];
    let mut inv_std = Vec::with_capacity(c);
    for ch in 0..c {
        let planes = || (0..b).map(move |n| (n * c + ch) * hw);
        let mut sum = T::zero();
        for base in planes() {
            sum = sum + x.data()[base..base + hw].iter().copied().sum::<T>();
        }
        let mean = sum / count;
        let mut var = T::zero();
        for base in planes() {
            for &v in &x.data()[base..base + hw] {
                var = var + (v - mean) * (v - mean);
            }
        }
        let istd = T::one() / (var / count + eps).sqrt();
        for base in planes() {
            for i in base..base + hw {
                out[i] = (x.data()[i] - mean) * istd;
            }
        }
        inv_std.push(istd);
    }
    Ok((Tensor::from_vec(x.shape().to_vec(), out)?, inv_std))
}

/// Gradient of [`channel_norm_forward`] given its output `xhat`.
pub fn channel_norm_backward<T: Real>(
    xhat: &Tensor<T>,
    inv_std: &[T],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (b, c, h, w) = xhat.dims4()?;
    let hw = h * w;
    let count = T::from_usize(b * hw).unwrap();
    let mut gx = vec![T::zero(); xhat.numel()];
    for ch in 0..c {
        let (mut sg, mut sgx) = (T::zero(), T::zero());
        for n in 0..b {
            let base = (n * c + ch) * hw;
            for i in base..base + hw {
                sg = sg + grad_out.data()[i];
                sgx = sgx + grad_out.data()[i] * xhat.data()[i];
            }
        }
        let scale = inv_std[ch] / count;
        for n in 0..b {
            let base = (n * c + ch) * hw;
            for i in base..base + hw {
                gx[i] = scale * (count * grad_out.data()[i] - sg - xhat.data()[i] * sgx);
            }
        }
    }
    Tensor::from_vec(xhat.shape().to_vec(), gx)
}

/// 2x2 average pooling with stride 2 (odd trailing rows/columns are dropped).
pub fn avg_pool2_forward<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dims4()?;
    if h < 2 || w < 2 {
        return Err(shape_err("avg_pool2d", format!("input {:?} too small", x.shape())));
    }
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::lit(0.25);
    let mut out = vec![T::zero(); b * c * oh * ow];
    for plane in 0..b * c {
        let src = &x.data()[plane * h * w..(plane + 1) * h * w];
        for y in 0..oh {
            for xx in 0..ow {
                let i = 2 * y * w + 2 * xx;
                out[plane * oh * ow + y * ow + xx] =
                    (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]) * quarter;
            }
        }
    }
    Tensor::from_vec(vec![b, c, oh, ow], out)
}

pub fn avg_pool2_backward<T: Real>(x_shape: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let &[b, c, h, w] = x_shape else {
        return Err(shape_err("avg_pool2d", format!("{x_shape:?}")));
    };
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::lit(0.25);
    let mut gx = vec![T::zero(); b * c * h * w];
    for plane in 0..b * c {
        let dst = &mut gx[plane * h * w..(plane + 1) * h * w];
        for y in 0..oh {
            for xx in 0..ow {
                let g = grad_out.data()[plane * oh * ow + y * ow + xx] * quarter;
                let i = 2 * y * w + 2 * xx;
                dst[i] = g;
                dst[i + 1] = g;
                dst[i + w] = g;
                dst[i + w + 1] = g;
            }
        }
    }
    Tensor::from_vec(x_shape.to_vec(), gx)
}
