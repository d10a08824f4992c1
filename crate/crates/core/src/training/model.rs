use crate::error::{input, Result};
use crate::face_model::{lbs, FaceParams, HeadAsset};
use crate::guidance::{geom_disp_field, mesh_fragments, nmfc, render_codes, NeuralCodes, CODE_INIT_STD};
use crate::network::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, GeneratorInputs, GeneratorOutput, GuidanceKind};
use crate::raster::Fragments;
use facewarp_tensor::{Bound, Graph, ParamId, ParamStore, Real, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Name of the latent-code table inside the generator parameter store.
pub const CODES_PARAM: &str = "codes";

/// Generator, discriminator and latent codes with their parameters.
#[derive(Debug, Clone)]
pub struct Model<T: Real> {
    pub generator: Generator,
    pub gen_params: ParamStore<T>,
    pub codes: Option<ParamId>,
    pub discriminator: Discriminator,
    pub disc_params: ParamStore<T>,
}

impl<T: Real> Model<T> {
    pub fn new(gcfg: &GeneratorConfig, dcfg: &DiscriminatorConfig, n_vertices: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen_params = ParamStore::new();
        let generator = Generator::new(gcfg, &mut gen_params, &mut rng)?;
        let codes = gcfg.guidance.uses_codes().then(|| {
            let init = Tensor::randn(&[n_vertices, gcfg.code_dim], CODE_INIT_STD, &mut rng);
            gen_params.add(CODES_PARAM, init, false, &mut rng)
        });
        let mut disc_params = ParamStore::new();
        let discriminator = Discriminator::new(dcfg, &mut disc_params, &mut rng)?;
        Ok(Self {
            generator,
            gen_params,
            codes,
            discriminator,
            disc_params,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.generator.config
    }

    /// Copy of the learned per-vertex codes, if the guidance uses them.
    pub fn neural_codes(&self) -> Option<NeuralCodes> {
        let t = &self.gen_params.get(self.codes?).value;
        Some(NeuralCodes {
            dim: t.shape()[1],
            codes: t.cast::<f64>().data().to_vec(),
        })
    }

    /// Advance spectral-norm power iteration on every normalized weight.
    pub fn power_iterate(&mut self) {
        self.gen_params.power_iterate();
        self.disc_params.power_iterate();
    }
}

/// Guidance geometry for a batch of (source, target) parameter pairs.
/// Everything here is fixed per batch; only codes are learned.
#[derive(Debug, Clone)]
pub struct BatchGeometry {
    pub resolution: usize,
    pub batch: usize,
    /// `[B, 2, H, W]` source-minus-target displacements over the target mesh.
    pub displacement: Option<Tensor<f64>>,
    pub nmfc_source: Option<Tensor<f64>>,
    pub nmfc_target: Option<Tensor<f64>>,
    pub fragments_source: Option<Arc<[Fragments]>>,
    pub fragments_target: Option<Arc<[Fragments]>>,
    /// Face coverage of the target mesh per batch item.
    pub target_coverage: Vec<Vec<bool>>,
}

impl BatchGeometry {
    pub fn build(asset: &HeadAsset, kind: GuidanceKind, resolution: usize, pairs: &[(&FaceParams, &FaceParams)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(input("empty batch"));
        }
        let r = resolution;
        let mut disp = Vec::new();
        let mut nm_s = Vec::new();
        let mut nm_d = Vec::new();
        let mut fr_s = Vec::new();
        let mut fr_d = Vec::new();
        let mut coverage = Vec::with_capacity(pairs.len());
        for &(ps, pd) in pairs {
            let ms = lbs(asset, ps)?;
            let md = lbs(asset, pd)?;
            let frag_d = mesh_fragments(&asset.faces, &md, pd.camera, r, r)?;
            coverage.push(frag_d.coverage());
            if kind.uses_displacement() {
                disp.extend(geom_disp_field(&asset.faces, &ms, &md, ps.camera, pd.camera, r, r)?.image);
            }
            if kind == GuidanceKind::Nmfc {
                nm_s.extend(nmfc(asset, &ms, ps.camera, r, r)?.image);
                nm_d.extend(nmfc(asset, &md, pd.camera, r, r)?.image);
            }
            if kind.uses_codes() {
                fr_s.push(mesh_fragments(&asset.faces, &ms, ps.camera, r, r)?);
                fr_d.push(frag_d);
            }
        }
        let b = pairs.len();
        let tensor = |data: Vec<f64>, c: usize| (!data.is_empty()).then(|| Tensor::from_vec(vec![b, c, r, r], data)).transpose();
        Ok(Self {
            resolution: r,
            batch: b,
            displacement: tensor(disp, 2)?,
            nmfc_source: tensor(nm_s, 3)?,
            nmfc_target: tensor(nm_d, 3)?,
            fragments_source: (!fr_s.is_empty()).then(|| fr_s.into()),
            fragments_target: (!fr_d.is_empty()).then(|| fr_d.into()),
            target_coverage: coverage,
        })
    }
}

/// Run the generator on `source` (`[B, 3, H, W]`) with guidance from `geom`.
pub fn generate<T: Real>(
    g: &mut Graph<T>,
    model: &Model<T>,
    params: &Bound,
    source: Var,
    geom: &BatchGeometry,
) -> Result<GeneratorOutput> {
    let kind = model.config().guidance;
    let displacement = geom.displacement.as_ref().map(|d| g.constant(d.cast()));
    let (source_semantic, target_semantic) = match kind {
        GuidanceKind::Nmfc => (
            geom.nmfc_source.as_ref().map(|t| g.constant(t.cast())),
            geom.nmfc_target.as_ref().map(|t| g.constant(t.cast())),
        ),
        GuidanceKind::NeuralCodes | GuidanceKind::Combined => {
            let codes = params.get(model.codes.ok_or_else(|| input("model has no latent codes"))?);
            let fs = geom.fragments_source.clone().ok_or_else(|| input("batch lacks source fragments"))?;
            let fd = geom.fragments_target.clone().ok_or_else(|| input("batch lacks target fragments"))?;
            (Some(render_codes(g, codes, fs)?), Some(render_codes(g, codes, fd)?))
        }
        GuidanceKind::GeomDisp => (None, None),
    };
    let inputs = GeneratorInputs {
        source,
        displacement,
        source_semantic,
        target_semantic,
    };
    model.generator.forward(g, params, &inputs)
}
