use super::config::{Config, ExtractorKind};
use super::losses::{feature_matching_loss, hinge_d_loss, hinge_g_loss, perceptual_loss};
use super::model::{generate, BatchGeometry, Model};
use crate::archive::{Archive, ArrayData};
use crate::error::{input, Error, Result};
use crate::network::{FeatureExtractor, IdentityExtractor, RandomConvExtractor};
use facewarp_tensor::{Adam, Graph, ParamStore, Tensor, TensorError, Var};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Training images and the guidance geometry linking them.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[B, 3, H, W]` in `[-1, 1]`.
    pub source: Tensor<f32>,
    pub target: Tensor<f32>,
    pub geometry: BatchGeometry,
}

impl Batch {
    pub fn validate(&self, resolution: usize) -> Result<()> {
        let want = [self.geometry.batch, 3, resolution, resolution];
        if self.source.shape() != want || self.target.shape() != want {
            return Err(input(format!(
                "batch images {:?} / {:?}, expected {want:?}",
                self.source.shape(),
                self.target.shape()
            )));
        }
        Ok(())
    }
}

/// Loss values of one iteration. Component terms are unweighted; `warp` is
/// the weighted sum of the three generator terms on the warped source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: usize,
    pub lr: f64,
    pub g_total: f64,
    pub perceptual: f64,
    pub adversarial: f64,
    pub feature_matching: f64,
    pub warp: f64,
    pub d_loss: f64,
    /// Mean absolute error of the output against the target, in `[-1, 1]` units.
    pub l1: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.g_total, self.d_loss].iter().all(|v| v.is_finite())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

pub(crate) fn make_extractor(kind: ExtractorKind, seed: u64) -> Box<dyn FeatureExtractor<f32>> {
    match kind {
        ExtractorKind::Random => Box::new(RandomConvExtractor::<f32>::new(seed)),
        ExtractorKind::Identity => Box::new(IdentityExtractor),
    }
}

/// Alternating discriminator / generator optimisation.
pub struct Trainer {
    pub config: Config,
    pub model: Model<f32>,
    pub gen_opt: Adam,
    pub disc_opt: Adam,
    /// Number of completed iterations.
    pub iteration: usize,
    /// Where diagnostic state goes when a loss turns non-finite.
    pub dump_dir: PathBuf,
    extractor: Box<dyn FeatureExtractor<f32>>,
}

impl std::fmt::Debug for Trainer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trainer")
            .field("iteration", &self.iteration)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

struct GenTerms {
    perceptual: Var,
    adversarial: Option<Var>,
    feature_matching: Option<Var>,
}

impl Trainer {
    pub fn new(config: Config, n_vertices: usize) -> Result<Self> {
        config.validate()?;
        let model = Model::new(&config.model, &config.discriminator, n_vertices, config.seed)?;
        Ok(Self::from_parts(config, model))
    }

    fn from_parts(config: Config, model: Model<f32>) -> Self {
        let extractor = make_extractor(config.loss.extractor, config.loss.extractor_seed);
        let lr = config.train.lr;
        Self {
            config,
            model,
            gen_opt: Adam::new(lr),
            disc_opt: Adam::new(lr),
            iteration: 0,
            dump_dir: std::env::temp_dir(),
            extractor,
        }
    }

    pub fn extractor(&self) -> &dyn FeatureExtractor<f32> {
        self.extractor.as_ref()
    }

    fn gen_terms(&self, g: &mut Graph<f32>, dp: &facewarp_tensor::Bound, real: &crate::network::DiscOutput, fake: Var, target: Var) -> Result<GenTerms> {
        let w = &self.config.loss;
        let perceptual = perceptual_loss(g, self.extractor.as_ref(), target, fake)?;
        let (mut adversarial, mut feature_matching) = (None, None);
        if w.adversarial > 0.0 || w.feature_matching > 0.0 {
            let out = self.model.discriminator.forward(g, dp, fake)?;
            if w.adversarial > 0.0 {
                adversarial = Some(hinge_g_loss(g, &out.logits())?);
            }
            if w.feature_matching > 0.0 {
                feature_matching = Some(feature_matching_loss(g, real, &out)?);
            }
        }
        Ok(GenTerms {
            perceptual,
            adversarial,
            feature_matching,
        })
    }

    fn weighted(&self, g: &mut Graph<f32>, t: &GenTerms) -> Result<Var> {
        let w = &self.config.loss;
        let mut parts = vec![g.scale(t.perceptual, w.perceptual as f32)?];
        if let Some(a) = t.adversarial {
            parts.push(g.scale(a, w.adversarial as f32)?);
        }
        if let Some(f) = t.feature_matching {
            parts.push(g.scale(f, w.feature_matching as f32)?);
        }
        Ok(g.add_all(&parts)?)
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step(&mut self, batch: &Batch) -> Result<LossReport> {
        batch.validate(self.config.model.resolution)?;
        let lr = self.config.train.lr_at(self.iteration);
        self.gen_opt.lr = lr;
        self.disc_opt.lr = lr;
        self.model.power_iterate();
        let (report, d_grads, g_grads) = match self.forward_backward(batch, lr) {
            Ok(r) => r,
            Err(Error::Tensor(TensorError::NonFinite { op })) => {
                return Err(self.dump_non_finite(None, &format!("{op} output")));
            }
            Err(e) => return Err(e),
        };
        if !report.is_finite() {
            return Err(self.dump_non_finite(Some(&report), "loss"));
        }
        let finite = |gs: &[Option<Tensor<f32>>]| gs.iter().flatten().all(|t| t.is_finite());
        if !finite(&g_grads) || !finite(&d_grads) {
            return Err(self.dump_non_finite(Some(&report), "gradient"));
        }
        self.disc_opt.step(&mut self.model.disc_params, &d_grads);
        self.gen_opt.step(&mut self.model.gen_params, &g_grads);
        self.iteration += 1;
        Ok(report)
    }

    #[allow(clippy::type_complexity)]
    fn forward_backward(&self, batch: &Batch, lr: f64) -> Result<(LossReport, Vec<Option<Tensor<f32>>>, Vec<Option<Tensor<f32>>>)> {
        let mut g = Graph::<f32>::new();
        let gp = self.model.gen_params.bind(&mut g, true)?;
        let source = g.constant(batch.source.clone());
        let target = g.constant(batch.target.clone());
        let out = generate(&mut g, &self.model, &gp, source, &batch.geometry)?;

        // Discriminator on a detached copy of the output.
        let dp_train = self.model.disc_params.bind(&mut g, true)?;
        let fake_detached = g.detach(out.image);
        let real_d = self.model.discriminator.forward(&mut g, &dp_train, target)?;
        let fake_d = self.model.discriminator.forward(&mut g, &dp_train, fake_detached)?;
        let d_loss = hinge_d_loss(&mut g, &real_d.logits(), &fake_d.logits())?;
        let d_value = g.value(d_loss).data()[0] as f64;
        g.backward(d_loss)?;
        let d_grads = self.model.disc_params.grads(&g, &dp_train);

        // Generator against a frozen copy of the discriminator.
        let dp = self.model.disc_params.bind(&mut g, false)?;
        let real = self.model.discriminator.forward(&mut g, &dp, target)?;
        let main = self.gen_terms(&mut g, &dp, &real, out.image, target)?;
        let mut total = self.weighted(&mut g, &main)?;
        let mut warp_value = 0.0;
        if self.config.loss.warp > 0.0 {
            let warped = g.grid_warp(source, out.displacement)?;
            let terms = self.gen_terms(&mut g, &dp, &real, warped, target)?;
            let warp = self.weighted(&mut g, &terms)?;
            warp_value = g.value(warp).data()[0] as f64;
            let scaled = g.scale(warp, self.config.loss.warp as f32)?;
            total = g.add(total, scaled)?;
        }
        let diff = g.sub(out.image, target)?;
        let l1 = g.mean_abs(diff)?;
        let scalar = |g: &Graph<f32>, v: Option<Var>| v.map_or(0.0, |v| g.value(v).data()[0] as f64);
        let report = LossReport {
            iteration: self.iteration,
            lr,
            g_total: scalar(&g, Some(total)),
            perceptual: scalar(&g, Some(main.perceptual)),
            adversarial: scalar(&g, main.adversarial),
            feature_matching: scalar(&g, main.feature_matching),
            warp: warp_value,
            d_loss: d_value,
            l1: scalar(&g, Some(l1)),
        };
        if !report.is_finite() {
            return Ok((report, d_grads, Vec::new()));
        }
        g.backward(total)?;
        let g_grads = self.model.gen_params.grads(&g, &gp);
        Ok((report, d_grads, g_grads))
    }

    fn dump_non_finite(&self, report: Option<&LossReport>, what: &str) -> Error {
        let path = self.dump_dir.join(format!("nonfinite-iter{}.json", self.iteration));
        let params = |s: &ParamStore<f32>| {
            s.iter()
                .map(|(_, p)| serde_json::json!({"name": p.name, "finite": p.value.is_finite(), "max_abs": p.value.max_abs()}))
                .collect::<Vec<_>>()
        };
        let state = serde_json::json!({
            "iteration": self.iteration,
            "non_finite": what,
            "report": report,
            "generator": params(&self.model.gen_params),
            "discriminator": params(&self.model.disc_params),
        });
        let written = std::fs::create_dir_all(&self.dump_dir)
            .and_then(|_| std::fs::write(&path, serde_json::to_vec_pretty(&state).unwrap_or_default()));
        if let Err(e) = written {
            log::error!("could not write {}: {e}", path.display());
        }
        Error::NonFiniteLoss {
            iteration: self.iteration,
            dump: path,
        }
    }

    /// Parameters, ADAM moments, spectral-norm vectors and the optimiser
    /// position in one archive.
    pub fn to_archive(&self) -> Result<Archive> {
        let meta = serde_json::json!({
            "config": self.config,
            "iteration": self.iteration,
            "gen_steps": self.gen_opt.steps,
            "disc_steps": self.disc_opt.steps,
        });
        let mut ar = Archive::new(CHECKPOINT_KIND, meta);
        for (prefix, store) in [("gen", &self.model.gen_params), ("disc", &self.model.disc_params)] {
            for (_, p) in store.iter() {
                let name = format!("{prefix}/{}", p.name);
                let shape = p.value.shape().to_vec();
                ar.push_f32(&name, shape.clone(), p.value.data().to_vec())?;
                ar.push_f32(format!("{name}.m"), shape.clone(), p.adam_m.data().to_vec())?;
                ar.push_f32(format!("{name}.v"), shape, p.adam_v.data().to_vec())?;
                if let Some(u) = &p.sn_u {
                    ar.push(format!("{name}.u"), vec![u.len()], ArrayData::F32(u.clone()))?;
                }
            }
        }
        Ok(ar)
    }

    pub fn from_archive(ar: &Archive) -> Result<Self> {
        ar.expect_kind(CHECKPOINT_KIND)?;
        let bad = |d: &str| Error::Format {
            path: PathBuf::from("<checkpoint>"),
            detail: d.to_string(),
        };
        let config: Config = serde_json::from_value(ar.meta.get("config").cloned().ok_or_else(|| bad("missing config"))?)?;
        let field = |k: &str| ar.meta.get(k).and_then(|v| v.as_u64()).ok_or_else(|| bad(&format!("missing {k}")));
        let (iteration, gen_steps, disc_steps) = (field("iteration")?, field("gen_steps")?, field("disc_steps")?);
        let codes_rows = ar
            .f32(&format!("gen/{}", super::model::CODES_PARAM))
            .map(|(s, _)| s[0])
            .unwrap_or(0);
        config.validate()?;
        let model = Model::new(&config.model, &config.discriminator, codes_rows, config.seed)?;
        let mut t = Self::from_parts(config, model);
        for (prefix, store) in [("gen", &mut t.model.gen_params), ("disc", &mut t.model.disc_params)] {
            for p in store.iter_mut() {
                let name = format!("{prefix}/{}", p.name);
                let load = |n: &str, into: &mut Tensor<f32>| -> Result<()> {
                    let (shape, data) = ar.f32(n)?;
                    if shape != into.shape() {
                        return Err(bad(&format!("{n} has shape {shape:?}, model expects {:?}", into.shape())));
                    }
                    into.data_mut().copy_from_slice(data);
                    Ok(())
                };
                load(&name, &mut p.value)?;
                load(&format!("{name}.m"), &mut p.adam_m)?;
                load(&format!("{name}.v"), &mut p.adam_v)?;
                if let Some(u) = p.sn_u.as_mut() {
                    let (_, data) = ar.f32(&format!("{name}.u"))?;
                    if data.len() != u.len() {
                        return Err(bad(&format!("{name}.u has the wrong length")));
                    }
                    u.copy_from_slice(data);
                }
            }
        }
        t.iteration = iteration as usize;
        t.gen_opt.steps = gen_steps;
        t.disc_opt.steps = disc_steps;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?).map_err(|e| match e {
            Error::Format { detail, .. } => Error::Format {
                path: path.to_path_buf(),
                detail,
            },
            other => other,
        })
    }
}

/// Archive kind written by [`Trainer::save`].
pub const CHECKPOINT_KIND: &str = "checkpoint";
