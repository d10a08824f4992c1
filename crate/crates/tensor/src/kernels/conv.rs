use crate::error::{shape_err, Result};
use crate::{Real, Tensor};

/// Resolved geometry of a square-kernel 2-D cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub height: usize,
    pub width: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], w: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let (&[batch, in_ch, height, width], &[out_ch, w_in, kh, kw]) = (x, w) else {
            return Err(shape_err("conv2d", format!("input {x:?}, weight {w:?}")));
        };
        if w_in != in_ch {
            return Err(shape_err(
                "conv2d",
                format!("weight expects {w_in} input channels, input has {in_ch}"),
            ));
        }
        if kh != kw || kh % 2 == 0 {
            return Err(shape_err("conv2d", format!("kernel must be square and odd, got {kh}x{kw}")));
        }
        if stride == 0 {
            return Err(shape_err("conv2d", "stride must be positive"));
        }
        if height + 2 * pad < kh || width + 2 * pad < kw {
            return Err(shape_err(
                "conv2d",
                format!("kernel {kh} larger than padded input {height}x{width} (pad {pad})"),
            ));
        }
        Ok(Self {
            batch,
            in_ch,
            height,
            width,
            out_ch,
            kernel: kh,
            stride,
            pad,
            out_h: (height + 2 * pad - kh) / stride + 1,
            out_w: (width + 2 * pad - kw) / stride + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col<T: Real>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.pad as isize);
    let ncols = g.col_cols();
    for c in 0..g.in_ch {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * s) as isize + ki as isize - p;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * s) as isize + kj as isize - p;
                        *v = if ix < 0 || ix >= g.width as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.pad as isize);
    let ncols = g.col_cols();
    for c in 0..g.in_ch {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * s) as isize + ki as isize - p;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = (ox * s) as isize + kj as isize - p;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] = dst[ix as usize] + src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeom::new(x.shape(), w.shape(), stride, pad)?;
    if let Some(b) = bias {
        if b.numel() != g.out_ch {
            return Err(shape_err(
                "conv2d",
                format!("bias has {} entries for {} output channels", b.numel(), g.out_ch),
            ));
        }
    }
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let in_len = g.in_ch * g.height * g.width;
    let out_len = g.out_ch * ncols;
    let mut out = vec![T::zero(); g.batch * out_len];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); rows * ncols]
    };
    for n in 0..g.batch {
        let xi = &x.data()[n * in_len..(n + 1) * in_len];
        let col_src: &[T] = if g.is_pointwise() {
            xi
        } else {
            im2col(xi, &g, &mut cols);
            &cols
        };
        let dst = &mut out[n * out_len..(n + 1) * out_len];
        if let Some(b) = bias {
            for (o, &bv) in b.data().iter().enumerate() {
                dst[o * ncols..(o + 1) * ncols].fill(bv);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        T::gemm(
            g.out_ch,
            rows,
            ncols,
            w.data(),
            (rows as isize, 1),
            col_src,
            (ncols as isize, 1),
            beta,
            dst,
            (ncols as isize, 1),
        );
    }
    Tensor::from_vec(vec![g.batch, g.out_ch, g.out_h, g.out_w], out)
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    need: (bool, bool, bool),
) -> Result<ConvGrads<T>> {
    let g = ConvGeom::new(x.shape(), w.shape(), stride, pad)?;
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let in_len = g.in_ch * g.height * g.width;
    let out_len = g.out_ch * ncols;
    let mut dx = need.0.then(|| vec![T::zero(); x.numel()]);
    let mut dw = need.1.then(|| vec![T::zero(); w.numel()]);
    let mut db = need.2.then(|| vec![T::zero(); g.out_ch]);
    let mut cols = vec![T::zero(); if g.is_pointwise() { 0 } else { rows * ncols }];
    let mut dcols = vec![T::zero(); if need.0 && !g.is_pointwise() { rows * ncols } else { 0 }];
    for n in 0..g.batch {
        let go = &grad_out.data()[n * out_len..(n + 1) * out_len];
        if let Some(db) = db.as_mut() {
            for (o, acc) in db.iter_mut().enumerate() {
                *acc = *acc + go[o * ncols..(o + 1) * ncols].iter().copied().sum::<T>();
            }
        }
        let xi = &x.data()[n * in_len..(n + 1) * in_len];
        if let Some(dw) = dw.as_mut() {
            let col_src: &[T] = if g.is_pointwise() {
                xi
            } else {
                im2col(xi, &g, &mut cols);
                &cols
            };
            // dW[o, r] += sum_c go[o, c] * cols[r, c]
            T::gemm(
                g.out_ch,
                ncols,
                rows,
                go,
                (ncols as isize, 1),
                col_src,
                (1, ncols as isize),
                T::one(),
                dw,
                (rows as isize, 1),
            );
        }
        if let Some(dx) = dx.as_mut() {
            let dxi = &mut dx[n * in_len..(n + 1) * in_len];
            if g.is_pointwise() {
                // dx[r, c] = sum_o W[o, r] * go[o, c]
                T::gemm(
                    rows,
                    g.out_ch,
                    ncols,
                    w.data(),
                    (1, rows as isize),
                    go,
                    (ncols as isize, 1),
                    T::zero(),
                    dxi,
                    (ncols as isize, 1),
                );
            } else {
                T::gemm(
                    rows,
                    g.out_ch,
                    ncols,
                    w.data(),
                    (1, rows as isize),
                    go,
                    (ncols as isize, 1),
                    T::zero(),
                    &mut dcols,
                    (ncols as isize, 1),
                );
                col2im(&dcols, &g, dxi);
            }
        }
    }
    Ok(ConvGrads {
        input: dx.map(|d| Tensor::from_vec(x.shape().to_vec(), d)).transpose()?,
        weight: dw.map(|d| Tensor::from_vec(w.shape().to_vec(), d)).transpose()?,
        bias: db.map(|d| Tensor::from_vec(vec![g.out_ch], d)).transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let g = ConvGeom::new(x.shape(), w.shape(), stride, pad).unwrap();
        let mut out = Tensor::zeros(&[g.batch, g.out_ch, g.out_h, g.out_w]);
        for n in 0..g.batch {
            for o in 0..g.out_ch {
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        let mut acc = 0.0;
                        for c in 0..g.in_ch {
                            for ki in 0..g.kernel {
                                for kj in 0..g.kernel {
                                    let iy = (oy * stride + ki) as isize - pad as isize;
                                    let ix = (ox * stride + kj) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= g.height as isize || ix >= g.width as isize {
                                        continue;
                                    }
                                    let xv = x.data()[((n * g.in_ch + c) * g.height + iy as usize) * g.width + ix as usize];
                                    let wv = w.data()[((o * g.in_ch + c) * g.kernel + ki) * g.kernel + kj];
                                    acc += xv * wv;
                                }
                            }
                        }
                        out.data_mut()[((n * g.out_ch + o) * g.out_h + oy) * g.out_w + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_loop() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for &(stride, pad, k) in &[(1, 1, 3), (2, 1, 3), (1, 0, 1), (2, 2, 5), (1, 0, 3)] {
            let x = Tensor::<f64>::randn(&[2, 3, 7, 6], 1.0, &mut rng);
            let w = Tensor::<f64>::randn(&[4, 3, k, k], 1.0, &mut rng);
            let fast = conv2d_forward(&x, &w, None, stride, pad).unwrap();
            let slow = naive(&x, &w, stride, pad);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_even_kernel_and_channel_mismatch() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        assert!(conv2d_forward(&x, &Tensor::zeros(&[1, 2, 2, 2]), None, 1, 0).is_err());
        assert!(conv2d_forward(&x, &Tensor::zeros(&[1, 3, 3, 3]), None, 1, 1).is_err());
    }
}
