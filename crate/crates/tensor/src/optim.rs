use crate::error::{Result, TensorError};
use crate::{Graph, Real, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A trainable tensor with its ADAM moments and optional spectral-norm state.
#[derive(Debug, Clone)]
pub struct Parameter<T: Real> {
    pub name: String,
    pub value: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
    /// Left singular vector estimate (one entry per output row) when the
    /// parameter is spectrally normalized.
    pub sn_u: Option<Vec<T>>,
}

fn normalize<T: Real>(v: &mut [T]) {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    let denom = if norm > T::lit(1e-12) { norm } else { T::lit(1e-12) };
    for x in v.iter_mut() {
        *x = *x / denom;
    }
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Self {
            name: name.into(),
            value,
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            sn_u: None,
        }
    }

    fn rows_cols(&self) -> (usize, usize) {
        let rows = self.value.shape()[0];
        (rows, self.value.numel() / rows.max(1))
    }

    /// `normalize(W^T u)` for the current `u`.
    pub fn right_vector(&self) -> Option<Vec<T>> {
        let u = self.sn_u.as_ref()?;
        let (rows, cols) = self.rows_cols();
        let w = self.value.data();
        let mut v = vec![T::zero(); cols];
        for r in 0..rows {
            for (c, acc) in v.iter_mut().enumerate() {
                *acc = *acc + w[r * cols + c] * u[r];
            }
        }
        normalize(&mut v);
        Some(v)
    }

    /// One power-iteration step on the stored `u`.
    pub fn power_iterate(&mut self) {
        let Some(v) = self.right_vector() else { return };
        let (rows, cols) = self.rows_cols();
        let w = self.value.data();
        let mut u: Vec<T> = (0..rows)
            .map(|r| w[r * cols..(r + 1) * cols].iter().zip(&v).map(|(&a, &b)| a * b).sum())
            .collect();
        normalize(&mut u);
        self.sn_u = Some(u);
    }

    /// Current estimate `u^T W v` of the largest singular value.
    pub fn sigma_estimate(&self) -> Option<T> {
        let v = self.right_vector()?;
        let u = self.sn_u.as_ref()?;
        let (_, cols) = self.rows_cols();
        let w = self.value.data();
        Some(
            u.iter()
                .enumerate()
                .map(|(r, &ur)| ur * w[r * cols..(r + 1) * cols].iter().zip(&v).map(|(&a, &b)| a * b).sum::<T>())
                .sum(),
        )
    }
}

/// One power-iteration step, then the weight divided by the estimated top
/// singular value. The weight is viewed as `out_channels x rest`.
pub fn spectral_normalize<T: Real>(param: &mut Parameter<T>) -> Result<Tensor<T>> {
    param.power_iterate();
    let sigma = param
        .sigma_estimate()
        .ok_or_else(|| TensorError::UnknownParameter(format!("{} has no spectral state", param.name)))?;
    if !(sigma > T::lit(1e-12)) {
        return Err(TensorError::DegenerateSpectralNorm(sigma.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(param.value.map(|x| x / sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T: Real> {
    params: Vec<Parameter<T>>,
}

/// Graph nodes for every parameter of a store, created by [`ParamStore::bind`].
#[derive(Debug, Clone)]
pub struct Bound {
    leaves: Vec<Var>,
    effective: Vec<Var>,
}

impl Bound {
    /// The node to use in the forward pass (spectrally normalized if enabled).
    pub fn get(&self, id: ParamId) -> Var {
        self.effective[id.0]
    }

    /// The raw leaf node holding the parameter value.
    pub fn leaf(&self, id: ParamId) -> Var {
        self.leaves[id.0]
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add<R: Rng + ?Sized>(&mut self, name: impl Into<String>, value: Tensor<T>, spectral: bool, rng: &mut R) -> ParamId {
        let mut p = Parameter::new(name, value);
        if spectral {
            let rows = p.value.shape()[0];
            let mut u: Vec<T> = (0..rows)
                .map(|_| T::lit(StandardNormal.sample(rng)))
                .collect();
            normalize(&mut u);
            p.sn_u = Some(u);
        }
        self.params.push(p);
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Advance the power iteration of every spectrally normalized parameter.
    pub fn power_iterate(&mut self) {
        for p in &mut self.params {
            p.power_iterate();
        }
    }

    /// Insert every parameter into `g`. Trainable bindings get gradients.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Result<Bound> {
        let mut leaves = Vec::with_capacity(self.params.len());
        let mut effective = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let leaf = g.leaf(p.value.clone(), trainable);
            let eff = match (&p.sn_u, p.right_vector()) {
                (Some(u), Some(v)) => g.spectral_norm(leaf, u.clone(), v)?,
                _ => leaf,
            };
            leaves.push(leaf);
            effective.push(eff);
        }
        Ok(Bound { leaves, effective })
    }

    /// Bind using caller-provided leaf nodes, one per parameter in store
    /// order. Spectral normalization is applied on top as in [`ParamStore::bind`].
    pub fn bind_leaves(&self, g: &mut Graph<T>, leaves: &[Var]) -> Result<Bound> {
        if leaves.len() != self.params.len() {
            return Err(TensorError::Shape {
                op: "bind_leaves",
                detail: format!("{} leaves for {} parameters", leaves.len(), self.params.len()),
            });
        }
        let mut effective = Vec::with_capacity(leaves.len());
        for (p, &leaf) in self.params.iter().zip(leaves) {
            if g.shape(leaf) != p.value.shape() {
                return Err(TensorError::Shape {
                    op: "bind_leaves",
                    detail: format!("{}: leaf {:?}, parameter {:?}", p.name, g.shape(leaf), p.value.shape()),
                });
            }
            let eff = match (&p.sn_u, p.right_vector()) {
                (Some(u), Some(v)) => g.spectral_norm(leaf, u.clone(), v)?,
                _ => leaf,
            };
            effective.push(eff);
        }
        Ok(Bound {
            leaves: leaves.to_vec(),
            effective,
        })
    }

    /// Gradients of the last backward pass for each bound parameter.
    pub fn grads(&self, g: &Graph<T>, bound: &Bound) -> Vec<Option<Tensor<T>>> {
        bound.leaves.iter().map(|&v| g.grad(v).cloned()).collect()
    }
}

/// ADAM with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
        }
    }

    /// Apply one update. Parameters without a gradient are left untouched.
    pub fn step<T: Real>(&mut self, store: &mut ParamStore<T>, grads: &[Option<Tensor<T>>]) {
        self.steps += 1;
        let t = self.steps as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(t));
        let c2 = T::lit(1.0 - self.beta2.powi(t));
        let (lr, eps) = (T::lit(self.lr), T::lit(self.eps));
        let one = T::one();
        for (p, g) in store.params.iter_mut().zip(grads) {
            let Some(g) = g else { continue };
            let value = p.value.data_mut();
            let m = p.adam_m.data_mut();
            let v = p.adam_v.data_mut();
            for i in 0..value.len() {
                let gi = g.data()[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                value[i] = value[i] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn store_with(value: f64) -> ParamStore<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut s = ParamStore::new();
        s.add("x", Tensor::scalar(value), false, &mut rng);
        s
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut s = store_with(0.7);
        let mut adam = Adam::new(1e-2);
        adam.step(&mut s, &[Some(Tensor::scalar(0.0))]);
        assert_eq!(s.get(ParamId(0)).value.data(), &[0.7]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = store_with(1.0);
        let mut adam = Adam::new(1e-3);
        adam.step(&mut s, &[Some(Tensor::scalar(1.0))]);
        let x = s.get(ParamId(0)).value.data()[0];
        assert!((1.0 - x - 1e-3).abs() < 1e-10, "{x}");
    }

    #[test]
    fn identity_weight_is_unchanged_by_spectral_norm() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut s = ParamStore::<f64>::new();
        let eye = Tensor::from_fn(&[4, 4], |i| if i % 5 == 0 { 1.0 } else { 0.0 });
        let id = s.add("w", eye.clone(), true, &mut rng);
        let out = spectral_normalize(s.get_mut(id)).unwrap();
        for (a, b) in out.data().iter().zip(eye.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
