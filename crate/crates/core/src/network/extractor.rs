use super::{lrelu, Conv, Init};
use crate::error::Result;
use facewarp_tensor::{Bound, Graph, ParamStore, Real, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A fixed image-to-features map. Its own weights never train, but gradients
/// flow through it to the input.
pub trait FeatureExtractor<T: Real> {
    fn features(&self, g: &mut Graph<T>, image: Var) -> Result<Vec<Var>>;
}

/// Returns the image itself as the only feature map.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityExtractor;

impl<T: Real> FeatureExtractor<T> for IdentityExtractor {
    fn features(&self, _g: &mut Graph<T>, image: Var) -> Result<Vec<Var>> {
        Ok(vec![image])
    }
}

/// Five frozen random conv blocks with 2x average pooling between them.
pub struct RandomConvExtractor<T: Real> {
    store: ParamStore<T>,
    blocks: Vec<Conv>,
}

impl<T: Real> RandomConvExtractor<T> {
    pub const WIDTHS: [usize; 5] = [16, 24, 32, 48, 64];

    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut cin = 3;
        let blocks = Self::WIDTHS
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let conv = Conv::new(&mut store, &format!("vgg{i}"), cin, c, 3, 1, Init::He, false, &mut rng);
                cin = c;
                conv
            })
            .collect();
        Self { store, blocks }
    }

    fn bind(&self, g: &mut Graph<T>) -> Result<Bound> {
        Ok(self.store.bind(g, false)?)
    }
}

impl<T: Real> FeatureExtractor<T> for RandomConvExtractor<T> {
    fn features(&self, g: &mut Graph<T>, image: Var) -> Result<Vec<Var>> {
        let p = self.bind(g)?;
        let mut x = image;
        let mut out = Vec::with_capacity(self.blocks.len());
        for (i, conv) in self.blocks.iter().enumerate() {
            if i > 0 && g.shape(x)[2] >= 2 && g.shape(x)[3] >= 2 {
                x = g.avg_pool2(x)?;
            }
            let h = conv.apply(g, &p, x)?;
            x = lrelu(g, h)?;
            out.push(x);
        }
        Ok(out)
    }
}
