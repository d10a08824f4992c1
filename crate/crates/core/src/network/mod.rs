//! Generator (encoder plus progressive warping decoder), multi-scale patch
//! discriminator and the fixed feature extractors used by the perceptual loss.

mod discriminator;
mod extractor;
mod generator;

pub use discriminator::{DiscOutput, Discriminator, DiscriminatorConfig};
pub use extractor::{FeatureExtractor, IdentityExtractor, RandomConvExtractor};
pub use generator::{Generator, GeneratorInputs, GeneratorOutput, PwmStep};

use crate::error::{config, Result};
use facewarp_tensor::{Bound, Graph, ParamId, ParamStore, Real, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Negative slope of every leaky ReLU in the model.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Guidance pattern steering the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuidanceKind {
    GeomDisp,
    NeuralCodes,
    Nmfc,
    /// Displacement field and neural codes concatenated along channels.
    Combined,
}

impl GuidanceKind {
    pub fn uses_displacement(self) -> bool {
        matches!(self, GuidanceKind::GeomDisp | GuidanceKind::Combined)
    }

    pub fn uses_codes(self) -> bool {
        matches!(self, GuidanceKind::NeuralCodes | GuidanceKind::Combined)
    }

    /// Channels of the semantic (non-displacement) part of the guidance.
    pub fn semantic_channels(self, code_dim: usize) -> usize {
        match self {
            GuidanceKind::GeomDisp => 0,
            GuidanceKind::NeuralCodes | GuidanceKind::Combined => code_dim,
            GuidanceKind::Nmfc => 3,
        }
    }

    pub fn guidance_channels(self, code_dim: usize) -> usize {
        self.semantic_channels(code_dim) + if self.uses_displacement() { 2 } else { 0 }
    }
}

impl std::str::FromStr for GuidanceKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geom-disp" => Ok(Self::GeomDisp),
            "neural-codes" => Ok(Self::NeuralCodes),
            "nmfc" => Ok(Self::Nmfc),
            "combined" | "geom-disp+neural-codes" => Ok(Self::Combined),
            other => Err(config(format!("unknown guidance kind {other:?}"))),
        }
    }
}

/// How displacements reach the shortcut features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarpMode {
    /// Re-estimate the displacement at every pyramid level.
    Progressive,
    /// Predict one displacement at the coarsest level and reuse it, resized,
    /// for every shortcut.
    SingleScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub resolution: usize,
    pub pyramid_levels: usize,
    pub base_channels: usize,
    pub max_channels: usize,
    pub guidance: GuidanceKind,
    pub warp_mode: WarpMode,
    pub code_dim: usize,
    pub spade_hidden: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            pyramid_levels: 5,
            base_channels: 32,
            max_channels: 256,
            guidance: GuidanceKind::NeuralCodes,
            warp_mode: WarpMode::Progressive,
            code_dim: crate::guidance::CODE_DIM,
            spade_hidden: 64,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let l = self.pyramid_levels;
        if l < 2 {
            return Err(config("pyramid_levels must be at least 2"));
        }
        let div = 1usize << (l - 1);
        if self.resolution == 0 || self.resolution % div != 0 {
            return Err(config(format!(
                "resolution {} is not divisible by 2^(L-1) = {div}",
                self.resolution
            )));
        }
        if self.base_channels == 0 || self.max_channels < self.base_channels || self.spade_hidden == 0 {
            return Err(config("channel widths must be positive with max >= base"));
        }
        if self.guidance.uses_codes() && self.code_dim == 0 {
            return Err(config("code_dim must be positive for code guidance"));
        }
        Ok(())
    }

    /// Feature width at level `l` in `1..=L` (1 is the coarsest).
    pub fn channels(&self, l: usize) -> usize {
        (self.base_channels << (self.pyramid_levels - l)).min(self.max_channels)
    }

    /// Spatial size at level `l`.
    pub fn level_size(&self, l: usize) -> usize {
        self.resolution >> (self.pyramid_levels - l)
    }

    pub fn input_channels(&self) -> usize {
        3 + self.guidance.semantic_channels(self.code_dim)
    }

    pub fn guidance_channels(&self) -> usize {
        self.guidance.guidance_channels(self.code_dim)
    }
}

/// A 3x3 (or other odd size) convolution with bias.
#[derive(Debug, Clone, Copy)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

/// How to initialise a new convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// He-normal weights for the given activation slope.
    He,
    Zero,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        init: Init,
        spectral: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = (cin * k * k) as f64;
        let w = match init {
            Init::He => Tensor::randn(&[cout, cin, k, k], (2.0 / ((1.0 + LEAKY_SLOPE * LEAKY_SLOPE) * fan_in)).sqrt(), rng),
            Init::Zero => Tensor::zeros(&[cout, cin, k, k]),
        };
        let weight = store.add(format!("{name}.weight"), w, spectral, rng);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[cout]), false, rng);
        Self {
            weight,
            bias,
            stride,
            pad: k / 2,
        }
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        Ok(g.conv2d(x, p.get(self.weight), Some(p.get(self.bias)), self.stride, self.pad)?)
    }
}

pub(crate) fn lrelu<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    Ok(g.leaky_relu(x, T::lit(LEAKY_SLOPE))?)
}

/// Spatially-adaptive normalization: parameter-free channel normalization
/// modulated by `gamma` and `beta` maps predicted from the guidance.
#[derive(Debug, Clone, Copy)]
pub struct Spade {
    pub shared: Conv,
    pub gamma: Conv,
    pub beta: Conv,
}

impl Spade {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        guidance_channels: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            shared: Conv::new(store, &format!("{name}.shared"), guidance_channels, hidden, 3, 1, Init::He, true, rng),
            gamma: Conv::new(store, &format!("{name}.gamma"), hidden, channels, 3, 1, Init::He, true, rng),
            beta: Conv::new(store, &format!("{name}.beta"), hidden, channels, 3, 1, Init::He, true, rng),
        }
    }

    /// `norm(x) * (1 + gamma(guidance)) + beta(guidance)`.
    pub fn apply<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var, guidance: Var) -> Result<Var> {
        let normalized = g.channel_norm(x)?;
        let h = self.shared.apply(g, p, guidance)?;
        let h = g.relu(h)?;
        let gamma = self.gamma.apply(g, p, h)?;
        let beta = self.beta.apply(g, p, h)?;
        let scale = g.add_scalar(gamma, T::one())?;
        let modulated = g.mul(normalized, scale)?;
        Ok(g.add(modulated, beta)?)
    }
}
