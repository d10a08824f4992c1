//! Reenactment and parameter editing with a trained generator.

use super::dataset::{from_model_tensor, head_rotation, to_model_tensor};
use super::render::Image;
use crate::error::{config, input, Error, Result};
use crate::face_model::{head_angles_deg, FaceParams, HeadAsset, JAW};
use crate::training::{generate, BatchGeometry, Model};
use facewarp_tensor::{Graph, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReenactMode {
    /// Source and driving frames share an identity.
    Same,
    /// Driving motion from another identity; the source shape is kept.
    Cross,
}

impl std::str::FromStr for ReenactMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same" => Ok(Self::Same),
            "cross" => Ok(Self::Cross),
            other => Err(config(format!("unknown reenactment mode {other:?}"))),
        }
    }
}

/// Parameters the guidance is rendered from. Cross mode swaps in the source
/// shape so the driving identity's geometry never reaches the generator.
pub fn guidance_params(params_s: &FaceParams, params_d: &FaceParams, mode: ReenactMode) -> FaceParams {
    match mode {
        ReenactMode::Same => params_d.clone(),
        ReenactMode::Cross => FaceParams {
            beta: params_s.beta.clone(),
            theta: params_d.theta.clone(),
            psi: params_d.psi.clone(),
            camera: params_d.camera,
        },
    }
}

#[derive(Debug, Clone)]
pub struct Reenactment {
    pub image: Image,
    /// Target parameters the guidance was rendered from.
    pub target_params: FaceParams,
    /// Finest predicted displacement `[2, H, W]` in pixels.
    pub displacement: Vec<f32>,
}

/// One reenactment request.
#[derive(Debug, Clone, Copy)]
pub struct ReenactItem<'a> {
    pub source: &'a Image,
    pub params_s: &'a FaceParams,
    pub params_d: &'a FaceParams,
}

fn check_model(model: &Model<f32>, asset: &HeadAsset) -> Result<()> {
    if let Some(id) = model.codes {
        let rows = model.gen_params.get(id).value.shape()[0];
        if rows != asset.num_vertices() {
            return Err(config(format!(
                "checkpoint has codes for {rows} vertices, asset has {}",
                asset.num_vertices()
            )));
        }
    }
    Ok(())
}

/// Run the generator on a batch of requests.
pub fn reenact_batch(model: &Model<f32>, asset: &HeadAsset, items: &[ReenactItem<'_>], mode: ReenactMode) -> Result<Vec<Reenactment>> {
    check_model(model, asset)?;
    let r = model.config().resolution;
    if items.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(bad) = items.iter().find(|it| it.source.width != r || it.source.height != r) {
        return Err(config(format!(
            "model expects {r}x{r} images, source is {}x{}",
            bad.source.width, bad.source.height
        )));
    }
    let targets: Vec<FaceParams> = items.iter().map(|it| guidance_params(it.params_s, it.params_d, mode)).collect();
    let pairs: Vec<(&FaceParams, &FaceParams)> = items.iter().zip(&targets).map(|(it, t)| (it.params_s, t)).collect();
    let geometry = BatchGeometry::build(asset, model.config().guidance, r, &pairs)?;
    let sources: Vec<Tensor<f32>> = items.iter().map(|it| to_model_tensor(it.source)).collect();
    let mut g = Graph::<f32>::new();
    let p = model.gen_params.bind(&mut g, false)?;
    let src = g.constant(Tensor::stack_batch(&sources)?);
    let out = generate(&mut g, model, &p, src, &geometry)?;
    let images = g.value(out.image).clone();
    let disp = g.value(out.displacement).data();
    let plane = 2 * r * r;
    targets
        .into_iter()
        .enumerate()
        .map(|(b, target_params)| {
            Ok(Reenactment {
                image: from_model_tensor(&images, b)?,
                target_params,
                displacement: disp[b * plane..(b + 1) * plane].to_vec(),
            })
        })
        .collect()
}

pub fn reenact(
    model: &Model<f32>,
    asset: &HeadAsset,
    source: &Image,
    params_s: &FaceParams,
    params_d: &FaceParams,
    mode: ReenactMode,
) -> Result<Reenactment> {
    let item = ReenactItem { source, params_s, params_d };
    Ok(reenact_batch(model, asset, &[item], mode)?.remove(0))
}

/// A parameter that an edit can sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepTarget {
    /// Head rotation about y, radians, other head angles kept.
    Yaw,
    Pitch,
    Roll,
    /// Jaw opening angle in radians.
    Jaw,
    Beta(usize),
    Psi(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub target: SweepTarget,
    pub values: Vec<f64>,
}

impl std::str::FromStr for Sweep {
    type Err = Error;

    /// `name=v1,v2,...` or `name=start:stop:count`, where name is `yaw`,
    /// `pitch`, `roll`, `jaw`, `beta<k>` or `psi<k>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, spec) = s.split_once('=').ok_or_else(|| config(format!("sweep {s:?} lacks '='")))?;
        let target = match name {
            "yaw" => SweepTarget::Yaw,
            "pitch" => SweepTarget::Pitch,
            "roll" => SweepTarget::Roll,
            "jaw" => SweepTarget::Jaw,
            n if n.starts_with("beta") => SweepTarget::Beta(n[4..].parse().map_err(|_| config(format!("bad index in {n:?}")))?),
            n if n.starts_with("psi") => SweepTarget::Psi(n[3..].parse().map_err(|_| config(format!("bad index in {n:?}")))?),
            n => return Err(config(format!("unknown sweep parameter {n:?}"))),
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| config(format!("bad number {t:?} in sweep")));
        let parts: Vec<&str> = spec.split(':').collect();
        let values = if parts.len() == 3 {
            let (a, b) = (num(parts[0])?, num(parts[1])?);
            let n: usize = parts[2].trim().parse().map_err(|_| config("sweep count must be an integer"))?;
            match n {
                0 => Vec::new(),
                1 => vec![a],
                _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
            }
        } else {
            spec.split(',').map(num).collect::<Result<_>>()?
        };
        if values.is_empty() {
            return Err(config("a sweep needs at least one value"));
        }
        Ok(Self { target, values })
    }
}

/// Apply one sweep value to `p`.
pub fn apply_override(p: &mut FaceParams, target: SweepTarget, value: f64) -> Result<()> {
    match target {
        SweepTarget::Yaw | SweepTarget::Pitch | SweepTarget::Roll => {
            let mut a = head_angles_deg(p).map(f64::to_radians);
            let axis = match target {
                SweepTarget::Pitch => 0,
                SweepTarget::Yaw => 1,
                _ => 2,
            };
            a[axis] = value;
            p.theta[0] = head_rotation(a[0], a[1], a[2]);
        }
        SweepTarget::Jaw => {
            let j = p.theta.get_mut(JAW).ok_or_else(|| input("asset has no jaw joint"))?;
            *j = [value, 0.0, 0.0];
        }
        SweepTarget::Beta(k) => *p.beta.get_mut(k).ok_or_else(|| input(format!("no shape coefficient {k}")))? = value,
        SweepTarget::Psi(k) => *p.psi.get_mut(k).ok_or_else(|| input(format!("no expression coefficient {k}")))? = value,
    }
    Ok(())
}

/// Target parameters for every sweep point. All sweeps advance together, so
/// they must have equal lengths; no sweeps gives the source parameters once.
pub fn edit_targets(params_s: &FaceParams, sweeps: &[Sweep]) -> Result<Vec<FaceParams>> {
    let Some(first) = sweeps.first() else {
        return Ok(vec![params_s.clone()]);
    };
    let n = first.values.len();
    if sweeps.iter().any(|s| s.values.len() != n) {
        return Err(input("simultaneous sweeps must have the same number of values"));
    }
    (0..n)
        .map(|i| {
            let mut p = params_s.clone();
            for s in sweeps {
                apply_override(&mut p, s.target, s.values[i])?;
            }
            Ok(p)
        })
        .collect()
}

/// One output per sweep point, each a same-identity reenactment of the
/// source towards the edited parameters.
pub fn edit(model: &Model<f32>, asset: &HeadAsset, source: &Image, params_s: &FaceParams, sweeps: &[Sweep]) -> Result<Vec<Reenactment>> {
    let targets = edit_targets(params_s, sweeps)?;
    let items: Vec<ReenactItem<'_>> = targets
        .iter()
        .map(|t| ReenactItem {
            source,
            params_s,
            params_d: t,
        })
        .collect();
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(8) {
        out.extend(reenact_batch(model, asset, chunk, ReenactMode::Same)?);
    }
    Ok(out)
}
