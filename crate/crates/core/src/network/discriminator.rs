use super::{lrelu, Conv, Init};
use crate::error::{input, Result};
use facewarp_tensor::{Bound, Graph, ParamStore, Real, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    /// Image pyramid depth: scale `s` sees the input average-pooled `s` times.
    pub scales: usize,
    /// Widths of the stride-2 layers before the single-channel logit layer.
    pub channels: Vec<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            scales: 3,
            channels: vec![32, 64, 128],
        }
    }
}

/// Per scale: the activations of every layer, the last being the patch logits.
#[derive(Debug, Clone)]
pub struct DiscOutput {
    pub features: Vec<Vec<Var>>,
}

impl DiscOutput {
    pub fn logits(&self) -> Vec<Var> {
        self.features.iter().map(|f| *f.last().expect("non-empty layer list")).collect()
    }
}

/// Multi-scale patch discriminator with spectrally normalized convolutions.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    pub layers: Vec<Vec<Conv>>,
}

impl Discriminator {
    pub fn new<T: Real, R: Rng + ?Sized>(cfg: &DiscriminatorConfig, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        if cfg.scales == 0 || cfg.channels.is_empty() {
            return Err(crate::error::config("discriminator needs at least one scale and one layer"));
        }
        let layers = (0..cfg.scales)
            .map(|s| {
                let mut cin = 3;
                let mut convs = Vec::new();
                for (i, &c) in cfg.channels.iter().chain(std::iter::once(&1)).enumerate() {
                    convs.push(Conv::new(store, &format!("disc{s}.conv{i}"), cin, c, 3, 2, Init::He, true, rng));
                    cin = c;
                }
                convs
            })
            .collect();
        Ok(Self {
            config: cfg.clone(),
            layers,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, image: Var) -> Result<DiscOutput> {
        if g.shape(image).len() != 4 || g.shape(image)[1] != 3 {
            return Err(input(format!("discriminator expects [B, 3, H, W], got {:?}", g.shape(image))));
        }
        let mut x = image;
        let mut features = Vec::with_capacity(self.layers.len());
        for (s, convs) in self.layers.iter().enumerate() {
            if s > 0 {
                x = g.avg_pool2(x)?;
            }
            let mut h = x;
            let mut feats = Vec::with_capacity(convs.len());
            for (i, conv) in convs.iter().enumerate() {
                h = conv.apply(g, p, h)?;
                if i + 1 < convs.len() {
                    h = lrelu(g, h)?;
                }
                feats.push(h);
            }
            features.push(feats);
        }
        Ok(DiscOutput { features })
    }
}
