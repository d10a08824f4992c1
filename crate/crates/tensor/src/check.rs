//! Central finite-difference gradient checking at 64-bit precision.

use crate::error::Result;
use crate::{Graph, Tensor, Var};
use rand::SeedableRng;

/// Settings for [`GradCheck::run`].
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Central-difference step.
    pub step: f64,
    /// Check at most this many randomly chosen elements per input.
    pub max_samples_per_input: Option<usize>,
    pub seed: u64,
    /// How many times the step may be shrunk by 10x when a probe crosses a
    /// kink (ReLU sign flip, bilinear cell change) of the function.
    pub kink_retries: u32,
    /// Lower bound on the denominator of the relative error. Raise it for
    /// large graphs where round-off in the loss swamps tiny gradients.
    pub abs_floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_samples_per_input: None,
            seed: 0,
            kink_retries: 3,
            abs_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input, element, analytic, numeric) of the worst element.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub checked: usize,
    /// Elements whose every probe straddled a kink and were therefore skipped.
    pub kink_skipped: usize,
}

/// `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)` over all input
/// elements, with central differences of step `1e-5`.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    Ok(GradCheck::default().run(f, inputs)?.max_rel_err)
}

fn evaluate<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<(f64, Option<u64>)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::with_branch_tracking();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = f(&mut g, &vars)?;
    Ok((g.value(out).data()[0], g.branch_signature()))
}

impl GradCheck {
    pub fn run<F>(&self, f: F, inputs: &[Tensor<f64>]) -> Result<GradCheckReport>
    where
        F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
    {
        let mut g = Graph::with_branch_tracking();
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let out = f(&mut g, &vars)?;
        let base_sig = g.branch_signature();
        g.backward(out)?;
        let analytic: Vec<Tensor<f64>> = vars
            .iter()
            .zip(inputs)
            .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        drop(g);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        let mut report = GradCheckReport::default();
        let mut probe = inputs.to_vec();
        for (i, input) in inputs.iter().enumerate() {
            let n = input.numel();
            let elements: Vec<usize> = match self.max_samples_per_input {
                Some(k) if k < n => rand::seq::index::sample(&mut rng, n, k).into_vec(),
                _ => (0..n).collect(),
            };
            for e in elements {
                let orig = input.data()[e];
                let mut numeric = None;
                let mut h = self.step;
                for _ in 0..=self.kink_retries {
                    probe[i].data_mut()[e] = orig + h;
                    let (fp, sp) = evaluate(&f, &probe)?;
                    probe[i].data_mut()[e] = orig - h;
                    let (fm, sm) = evaluate(&f, &probe)?;
                    probe[i].data_mut()[e] = orig;
                    if sp == base_sig && sm == base_sig {
                        numeric = Some((fp - fm) / (2.0 * h));
                        break;
                    }
                    h /= 10.0;
                }
                let Some(numeric) = numeric else {
                    report.kink_skipped += 1;
                    continue;
                };
                let a = analytic[i].data()[e];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(self.abs_floor);
                report.checked += 1;
                if report.worst.is_none() || rel > report.max_rel_err {
                    report.max_rel_err = rel;
                    report.worst = Some((i, e, a, numeric));
                }
            }
        }
        Ok(report)
    }
}
