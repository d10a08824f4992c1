//! Perceptual, hinge adversarial, feature-matching and warped-image losses.
//! Every sum over pixels is a mean so weights do not depend on resolution.

use crate::error::{input, Result};
use crate::network::{DiscOutput, FeatureExtractor};
use facewarp_tensor::{Graph, Real, Var};

/// Number of image scales the perceptual loss compares.
pub const PERCEPTUAL_SCALES: usize = 3;

/// `x` followed by `scales - 1` successive 2x average poolings.
pub fn image_pyramid<T: Real>(g: &mut Graph<T>, x: Var, scales: usize) -> Result<Vec<Var>> {
    let mut out = vec![x];
    for _ in 1..scales {
        let next = g.avg_pool2(*out.last().unwrap())?;
        out.push(next);
    }
    Ok(out)
}

fn l1<T: Real>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    Ok(g.mean_abs(d)?)
}

/// Sum over three image scales and every extractor layer of the mean
/// absolute feature difference.
pub fn perceptual_loss<T: Real>(
    g: &mut Graph<T>,
    extractor: &dyn FeatureExtractor<T>,
    real: Var,
    fake: Var,
) -> Result<Var> {
    if g.shape(real) != g.shape(fake) {
        return Err(input("perceptual loss needs images of equal shape"));
    }
    let real_pyr = image_pyramid(g, real, PERCEPTUAL_SCALES)?;
    let fake_pyr = image_pyramid(g, fake, PERCEPTUAL_SCALES)?;
    let mut terms = Vec::new();
    for (r, f) in real_pyr.into_iter().zip(fake_pyr) {
        let fr = extractor.features(g, r)?;
        let ff = extractor.features(g, f)?;
        for (a, b) in fr.into_iter().zip(ff) {
            terms.push(l1(g, a, b)?);
        }
    }
    Ok(g.add_all(&terms)?)
}

/// `-sum_s mean(D_s(fake))`.
pub fn hinge_g_loss<T: Real>(g: &mut Graph<T>, fake_logits: &[Var]) -> Result<Var> {
    let means = fake_logits.iter().map(|&l| g.mean(l)).collect::<Result<Vec<_>, _>>()?;
    let total = g.add_all(&means)?;
    Ok(g.scale(total, -T::one())?)
}

/// `sum_s mean(relu(1 - D_s(real))) + mean(relu(1 + D_s(fake)))`.
pub fn hinge_d_loss<T: Real>(g: &mut Graph<T>, real_logits: &[Var], fake_logits: &[Var]) -> Result<Var> {
    if real_logits.len() != fake_logits.len() {
        return Err(input("real and fake logits differ in scale count"));
    }
    let mut terms = Vec::with_capacity(2 * real_logits.len());
    for (&r, &f) in real_logits.iter().zip(fake_logits) {
        let neg = g.scale(r, -T::one())?;
        let margin = g.add_scalar(neg, T::one())?;
        let hinge = g.relu(margin)?;
        terms.push(g.mean(hinge)?);
        let margin = g.add_scalar(f, T::one())?;
        let hinge = g.relu(margin)?;
        terms.push(g.mean(hinge)?);
    }
    Ok(g.add_all(&terms)?)
}

/// Sum over scales and layers of mean absolute activation differences.
/// The real features should already be constants in `g`.
pub fn feature_matching_loss<T: Real>(g: &mut Graph<T>, real: &DiscOutput, fake: &DiscOutput) -> Result<Var> {
    if real.features.len() != fake.features.len()
        || real.features.iter().zip(&fake.features).any(|(a, b)| a.len() != b.len())
    {
        return Err(input("feature lists differ in structure"));
    }
    let mut terms = Vec::new();
    for (rs, fs) in real.features.iter().zip(&fake.features) {
        for (&r, &f) in rs.iter().zip(fs) {
            terms.push(l1(g, r, f)?);
        }
    }
    Ok(g.add_all(&terms)?)
}
