use crate::error::{shape_err, Result, TensorError};
use crate::kernels;
use crate::{Real, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An operation implemented outside this crate.
///
/// `backward` receives the input values, the recorded output and the gradient
/// flowing into the output, and returns one optional gradient per input.
pub trait CustomOp<T: Real> {
    fn name(&self) -> &'static str;
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad: &Tensor<T>,
    ) -> Result<Vec<Option<Tensor<T>>>>;
}

enum Op<T: Real> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    GridWarp {
        x: Var,
        disp: Var,
    },
    Resize {
        x: Var,
    },
    ChannelNorm {
        x: Var,
        inv_std: Vec<T>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    LeakyRelu(Var, T),
    Relu(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    AvgPool2(Var),
    Mean(Var),
    MeanAbs(Var),
    Sum(Var),
    SpectralNorm {
        w: Var,
        u: Vec<T>,
        v: Vec<T>,
        sigma: T,
    },
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp<T>>,
    },
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Tape of recorded operations. Nodes are appended in evaluation order, so the
/// node index is a topological order and backward walks it in reverse.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    branches: Option<u64>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn fnv(hash: &mut u64, v: u64) {
    for byte in v.to_le_bytes() {
        *hash ^= byte as u64;
        *hash = hash.wrapping_mul(0x100_0000_01b3);
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            branches: None,
        }
    }

    /// A graph that fingerprints every discrete branch taken by non-smooth ops
    /// (activation signs, absolute-value signs, bilinear cells). Used by the
    /// finite-difference checker to recognise steps that straddle a kink.
    pub fn with_branch_tracking() -> Self {
        Self {
            branches: Some(0xcbf2_9ce4_8422_2325),
            ..Self::new()
        }
    }

    pub fn branch_signature(&self) -> Option<u64> {
        self.branches
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward root with respect to `v`, if one was produced.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// New constant leaf holding a copy of `v`'s value; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn record_signs(&mut self, x: Var) {
        if let Some(mut h) = self.branches {
            for chunk in self.nodes[x.0].value.data().chunks(64) {
                let bits = chunk
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (i, v)| acc | (((*v > T::zero()) as u64) << i));
                fnv(&mut h, bits);
            }
            self.branches = Some(h);
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let out = kernels::conv2d_forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            stride,
            pad,
        )?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("conv2d", out, Op::Conv2d { x, w, b, stride, pad }, &inputs)
    }

    /// Bilinear warp: output pixel `(x, y)` samples `features` at
    /// `(x + disp[0], y + disp[1])`, clamped to the border.
    pub fn grid_warp(&mut self, features: Var, disp: Var) -> Result<Var> {
        let out = kernels::grid_warp_forward(self.value(features), self.value(disp))?;
        if let Some(mut h) = self.branches {
            kernels::grid_warp_branches(self.value(disp), |v| fnv(&mut h, v));
            self.branches = Some(h);
        }
        self.push("grid_warp", out, Op::GridWarp { x: features, disp }, &[features, disp])
    }

    pub fn resize_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let out = kernels::resize_forward(self.value(x), out_h, out_w)?;
        self.push("resize_bilinear", out, Op::Resize { x }, &[x])
    }

    /// Per-channel normalization over batch and spatial extent (no affine part).
    pub fn channel_norm(&mut self, x: Var) -> Result<Var> {
        let (out, inv_std) = kernels::channel_norm_forward(self.value(x))?;
        self.push("channel_norm", out, Op::ChannelNorm { x, inv_std }, &[x])
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(va.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip(a, b, |x, y| x + y);
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip(a, b, |x, y| x - y);
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip(a, b, |x, y| x * y);
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        let out = self.value(x).map(|v| v * s);
        self.push("scale", out, Op::Scale(x, s), &[x])
    }

    pub fn add_scalar(&mut self, x: Var, s: T) -> Result<Var> {
        let out = self.value(x).map(|v| v + s);
        self.push("add_scalar", out, Op::AddScalar(x), &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var> {
        self.record_signs(x);
        let out = self.value(x).map(|v| if v > T::zero() { v } else { v * slope });
        self.push("leaky_relu", out, Op::LeakyRelu(x, slope), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.record_signs(x);
        let out = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push("relu", out, Op::Relu(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.tanh());
        self.push("tanh", out, Op::Tanh(x), &[x])
    }

    /// Concatenate 4-d tensors along the channel dimension.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| shape_err("concat", "no inputs"))?;
        let (b, _, h, w) = self.value(first).dims4()?;
        let mut total = 0;
        for &x in xs {
            let (b2, c, h2, w2) = self.value(x).dims4()?;
            if (b2, h2, w2) != (b, h, w) {
                return Err(shape_err(
                    "concat",
                    format!("{:?} vs {:?}", self.shape(x), self.shape(first)),
                ));
            }
            total += c;
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(b * total * hw);
        for n in 0..b {
            for &x in xs {
                let c = self.shape(x)[1];
                data.extend_from_slice(&self.value(x).data()[n * c * hw..(n + 1) * c * hw]);
            }
        }
        let out = Tensor::from_vec(vec![b, total, h, w], data)?;
        self.push("concat", out, Op::Concat(xs.to_vec()), xs)
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let out = kernels::avg_pool2_forward(self.value(x))?;
        self.push("avg_pool2d", out, Op::AvgPool2(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let out = Tensor::scalar(v.sum() / T::from_usize(v.numel()).unwrap());
        self.push("mean", out, Op::Mean(x), &[x])
    }

    /// Mean absolute value (an L1 distance when applied to a difference).
    pub fn mean_abs(&mut self, x: Var) -> Result<Var> {
        self.record_signs(x);
        let v = self.value(x);
        let s: T = v.data().iter().map(|a| a.abs()).sum();
        let out = Tensor::scalar(s / T::from_usize(v.numel()).unwrap());
        self.push("mean_abs", out, Op::MeanAbs(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).sum());
        self.push("sum", out, Op::Sum(x), &[x])
    }

    /// Sum of scalar nodes.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let mut iter = terms.iter();
        let mut acc = *iter.next().ok_or_else(|| shape_err("add_all", "no terms"))?;
        for &t in iter {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// `w / sigma` with `sigma = u^T W v`, treating the power-iteration vectors
    /// `u` (rows) and `v` (columns of the flattened weight) as constants.
    pub fn spectral_norm(&mut self, w: Var, u: Vec<T>, v: Vec<T>) -> Result<Var> {
        let wt = self.value(w);
        let rows = wt.shape()[0];
        let cols = wt.numel() / rows.max(1);
        if u.len() != rows || v.len() != cols {
            return Err(shape_err(
                "spectral_norm",
                format!("weight {:?} with u {} / v {}", wt.shape(), u.len(), v.len()),
            ));
        }
        let mut sigma = T::zero();
        for (r, &ur) in u.iter().enumerate() {
            let row = &wt.data()[r * cols..(r + 1) * cols];
            sigma = sigma + ur * row.iter().zip(&v).map(|(&a, &b)| a * b).sum::<T>();
        }
        if !(sigma > T::lit(1e-12)) {
            return Err(TensorError::DegenerateSpectralNorm(sigma.to_f64().unwrap_or(f64::NAN)));
        }
        let out = wt.map(|x| x / sigma);
        self.push("spectral_norm", out, Op::SpectralNorm { w, u, v, sigma }, &[w])
    }

    /// Record an externally computed node.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor<T>, op: Box<dyn CustomOp<T>>) -> Result<Var> {
        let name = op.name();
        self.push(
            name,
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            inputs,
        )
    }

    /// Reverse-mode sweep from a scalar root. Previous gradients are discarded.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_value = &self.nodes[root.0].value;
        if root_value.numel() != 1 {
            return Err(TensorError::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[root.0].requires_grad {
            grads[root.0] = Some(Tensor::full(root_value.shape(), T::one()));
        }
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            for (input, contribution) in self.input_grads(&node.op, &node.value, &g)? {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn input_grads(&self, op: &Op<T>, out: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let pointwise = |x: Var, f: &dyn Fn(T, T, T) -> T| -> Tensor<T> {
            // f(input, output, grad)
            let xv = self.value(x);
            let data = xv
                .data()
                .iter()
                .zip(out.data())
                .zip(g.data())
                .map(|((&a, &o), &gv)| f(a, o, gv))
                .collect();
            Tensor::from_vec(xv.shape().to_vec(), data).expect("same shape")
        };
        let scalar_grad = g.data()[0];
        Ok(match op {
            Op::Leaf => Vec::new(),
            Op::Conv2d { x, w, b, stride, pad } => {
                let need = (self.needs(*x), self.needs(*w), b.is_some_and(|b| self.needs(b)));
                let grads = kernels::conv2d_backward(self.value(*x), self.value(*w), g, *stride, *pad, need)?;
                let mut v = Vec::new();
                v.extend(grads.input.map(|t| (*x, t)));
                v.extend(grads.weight.map(|t| (*w, t)));
                if let (Some(b), Some(t)) = (b, grads.bias) {
                    v.push((*b, t));
                }
                v
            }
            Op::GridWarp { x, disp } => {
                let (gx, gd) = kernels::grid_warp_backward(
                    self.value(*x),
                    self.value(*disp),
                    g,
                    (self.needs(*x), self.needs(*disp)),
                )?;
                gx.map(|t| (*x, t)).into_iter().chain(gd.map(|t| (*disp, t))).collect()
            }
            Op::Resize { x } => vec![(*x, kernels::resize_backward(self.shape(*x), g)?)],
            Op::ChannelNorm { x, inv_std } => {
                vec![(*x, kernels::channel_norm_backward(out, inv_std, g)?)]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let ga = Tensor::from_vec(
                    va.shape().to_vec(),
                    g.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect(),
                )?;
                let gb = Tensor::from_vec(
                    vb.shape().to_vec(),
                    g.data().iter().zip(va.data()).map(|(&x, &y)| x * y).collect(),
                )?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(x, s) => vec![(*x, g.map(|v| v * *s))],
            Op::AddScalar(x) => vec![(*x, g.clone())],
            Op::LeakyRelu(x, slope) => {
                vec![(*x, pointwise(*x, &|a, _, gv| if a > T::zero() { gv } else { gv * *slope }))]
            }
            Op::Relu(x) => vec![(*x, pointwise(*x, &|a, _, gv| if a > T::zero() { gv } else { T::zero() }))],
            Op::Tanh(x) => vec![(*x, pointwise(*x, &|_, o, gv| gv * (T::one() - o * o)))],
            Op::Concat(xs) => {
                let (b, total, h, w) = out.dims4()?;
                let hw = h * w;
                let mut offset = 0;
                let mut v = Vec::with_capacity(xs.len());
                for &x in xs {
                    let c = self.shape(x)[1];
                    let mut data = Vec::with_capacity(b * c * hw);
                    for n in 0..b {
                        let start = (n * total + offset) * hw;
                        data.extend_from_slice(&g.data()[start..start + c * hw]);
                    }
                    offset += c;
                    v.push((x, Tensor::from_vec(self.shape(x).to_vec(), data)?));
                }
                v
            }
            Op::AvgPool2(x) => vec![(*x, kernels::avg_pool2_backward(self.shape(*x), g)?)],
            Op::Mean(x) => {
                let n = T::from_usize(self.value(*x).numel()).unwrap();
                vec![(*x, Tensor::full(self.shape(*x), scalar_grad / n))]
            }
            Op::MeanAbs(x) => {
                let n = T::from_usize(self.value(*x).numel()).unwrap();
                let s = scalar_grad / n;
                vec![(*x, self.value(*x).map(|a| {
                    if a > T::zero() {
                        s
                    } else if a < T::zero() {
                        -s
                    } else {
                        T::zero()
                    }
                }))]
            }
            Op::Sum(x) => vec![(*x, Tensor::full(self.shape(*x), scalar_grad))],
            Op::SpectralNorm { w, u, v, sigma } => {
                let wt = self.value(*w);
                let cols = v.len();
                // d(W/s) = G/s - <G, W>/s^2 * u v^T
                let inner: T = g.data().iter().zip(wt.data()).map(|(&a, &b)| a * b).sum();
                let k = inner / (*sigma * *sigma);
                let data = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &gv)| gv / *sigma - k * u[i / cols] * v[i % cols])
                    .collect();
                vec![(*w, Tensor::from_vec(wt.shape().to_vec(), data)?)]
            }
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor<T>> = inputs.iter().map(|&i| self.value(i)).collect();
                let grads = op.backward(&values, out, g)?;
                inputs
                    .iter()
                    .zip(grads)
                    .filter_map(|(&i, gi)| gi.map(|t| (i, t)))
                    .collect()
            }
        })
    }
}
